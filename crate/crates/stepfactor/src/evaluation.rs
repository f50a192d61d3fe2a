//! Pricing-performance metrics, investment metrics, in/out-of-sample fold
//! evaluation, and the paired-month bootstrap Sharpe comparison.
//!
//! Pricing metrics summarize how well a model prices a set of target assets:
//! average absolute alphas `A|α|`, average absolute alpha t-values `A|t(α)|`,
//! the count of |t| > 1.96, and two R² measures judged against a CAPM
//! benchmark: Total R² compares time-series prediction errors `R_it − β̂_i'f_t`
//! (the intercept is excluded from prediction) and CS R² compares
//! cross-sectional errors `R̄_i − β̂_i'λ̃`, with the risk premia `λ̃` estimated
//! by regressing mean returns on betas without an intercept and the CAPM term
//! using the sample mean market excess return as its premium.
//!
//! Investment metrics evaluate the model's tangency portfolio: average return,
//! annualized Sharpe ratio, and its alpha against benchmark models.
//!
//! Out-of-sample evaluation trains every parameter — betas, premia, tangency
//! weights, and optionally the model itself — on the complement of a fold and
//! freezes them when scoring the fold.
//!
//! The bootstrap splits the sample into consecutive month pairs, draws pairs
//! with replacement, uses one month of each pair in-sample and leaves the
//! other out-of-sample, and compares models by realized Sharpe ratios across
//! runs.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frontier::{
    self, moments, portfolio_returns, spanning_regression, tangency_weights, ModelSet, SymSolver,
};
use crate::panel::{FoldSplit, ReturnPanel};
use crate::stepwise::{stepwise_select, SelectionConfig};

/// Cross-sectional pricing summary for one model against one target set.
/// Alphas and R² values are in percent.
#[derive(Debug, Clone, Serialize)]
pub struct PricingMetrics {
    /// Average absolute alpha, %/period.
    pub avg_abs_alpha: f64,
    /// Average absolute alpha t-statistic.
    pub avg_abs_t: f64,
    /// Number of targets with |t| > 1.96.
    pub n_sign2: usize,
    /// Total R² (%) against the CAPM time-series benchmark.
    pub total_r2: f64,
    /// Cross-sectional R² (%) against the CAPM-implied mean returns.
    pub cs_r2: f64,
}

/// Tangency-portfolio investment summary. Returns are %/period.
#[derive(Debug, Clone, Serialize)]
pub struct InvestMetrics {
    pub avg_return: f64,
    pub ann_sharpe: f64,
    /// Benchmark label → (alpha %/period, t-statistic).
    pub benchmark_alphas: BTreeMap<String, (f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct PricingOptions {
    /// Name of the market factor used by the CAPM benchmark terms.
    pub market: String,
    /// Add an intercept to the cross-sectional premium regression.
    pub cs_intercept: bool,
}

impl Default for PricingOptions {
    fn default() -> Self {
        PricingOptions { market: "MKT".into(), cs_intercept: false }
    }
}

#[derive(Debug, Clone)]
pub struct InvestOptions {
    pub annualization: f64,
    pub vol_target: f64,
}

impl Default for InvestOptions {
    fn default() -> Self {
        InvestOptions { annualization: 12.0, vol_target: frontier::DEFAULT_VOL_TARGET }
    }
}

/// Two-sided significance stars on an OLS t-statistic (10% / 5% / 1%).
pub fn significance_stars(t: f64) -> &'static str {
    let a = t.abs();
    if a > 2.5758293 {
        "***"
    } else if a > 1.9599640 {
        "**"
    } else if a > 1.6448536 {
        "*"
    } else {
        ""
    }
}

// ---------------------------------------------------------------------------
// Pricing metrics
// ---------------------------------------------------------------------------

/// Pricing summary of `model` on the `targets`, benchmarked against the CAPM.
pub fn pricing_metrics(
    panel: &ReturnPanel,
    model: &ModelSet,
    targets: &[String],
    opts: &PricingOptions,
) -> Result<PricingMetrics> {
    if targets.is_empty() {
        return Err(Error::EmptySelection { context: "pricing metrics need at least one target".into() });
    }
    for t in targets {
        if model.contains(t) {
            return Err(Error::InvalidParam {
                name: "targets".into(),
                reason: format!("`{t}` is part of the model"),
            });
        }
    }
    if !panel.contains(&opts.market) {
        return Err(Error::UnknownName { name: opts.market.clone() });
    }

    let fit = spanning_regression(panel, targets, model)?;
    let market_model = ModelSet::new(vec![opts.market.clone()])?;
    let capm_targets: Vec<String> = targets.iter().cloned().collect();
    let capm_fit = if model.len() == 1 && model.names()[0] == opts.market {
        fit.clone()
    } else {
        // the market itself can sit among the targets of the capm fit only if
        // absent; targets containing the market are rejected above when the
        // model is the capm, otherwise exclude is unnecessary
        spanning_regression(panel, &capm_targets, &market_model)?
    };
    if capm_fit.lhs != fit.lhs {
        return Err(Error::DimensionMismatch { context: "benchmark target mismatch".into() });
    }

    let n1 = targets.len();
    let t_obs = fit.t_obs as f64;
    let avg_abs_alpha = 100.0 * fit.alphas.iter().map(|a| a.abs()).sum::<f64>() / n1 as f64;
    let finite_t: Vec<f64> = fit.alpha_t.iter().cloned().collect();
    let avg_abs_t = finite_t.iter().map(|t| t.abs().min(1e6)).sum::<f64>() / n1 as f64;
    let n_sign2 = finite_t.iter().filter(|t| t.abs() > 1.96).count();

    // Total R²: time-series prediction errors R − β̂'f. With the intercept
    // excluded, the per-asset error sum of squares decomposes exactly into
    // T·(residual variance + α̂²).
    let sse_model: f64 =
        (0..n1).map(|i| t_obs * (fit.resid_cov[(i, i)].max(0.0) + fit.alphas[i].powi(2))).sum();
    let sse_capm: f64 = (0..n1)
        .map(|i| t_obs * (capm_fit.resid_cov[(i, i)].max(0.0) + capm_fit.alphas[i].powi(2)))
        .sum();
    let total_r2 = if sse_capm > 0.0 { 100.0 * (1.0 - sse_model / sse_capm) } else { 0.0 };

    // CS R²: regress mean returns on betas (no intercept unless requested).
    let mean_targets = DVector::from_fn(n1, |i, _| fit.alphas[i] + {
        // R̄_i = α̂_i + β̂_i' μ_f reconstructs the sample mean exactly
        let mut s = 0.0;
        for k in 0..model.len() {
            s += fit.betas[(k, i)] * mean_of(panel, &model.names()[k]).unwrap_or(0.0);
        }
        s
    });
    let lambda = cross_sectional_premia(&fit.betas, &mean_targets, opts.cs_intercept)?;
    let predicted = predict_cs(&fit.betas, &lambda, opts.cs_intercept);
    let lambda_mkt = mean_of(panel, &opts.market)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n1 {
        num += (mean_targets[i] - predicted[i]).powi(2);
        den += (mean_targets[i] - capm_fit.betas[(0, i)] * lambda_mkt).powi(2);
    }
    let cs_r2 = if den > 0.0 { 100.0 * (1.0 - num / den) } else { 0.0 };

    Ok(PricingMetrics { avg_abs_alpha, avg_abs_t, n_sign2, total_r2, cs_r2 })
}

fn mean_of(panel: &ReturnPanel, name: &str) -> Result<f64> {
    let series = panel.series(name)?;
    Ok(series.iter().sum::<f64>() / series.len() as f64)
}

/// OLS premia from regressing mean returns on betas; `betas` is m x n.
fn cross_sectional_premia(
    betas: &DMatrix<f64>,
    mean_returns: &DVector<f64>,
    intercept: bool,
) -> Result<DVector<f64>> {
    let (m, n) = (betas.nrows(), betas.ncols());
    let cols = if intercept { m + 1 } else { m };
    let x = DMatrix::from_fn(n, cols, |i, j| {
        if intercept && j == 0 {
            1.0
        } else {
            let k = if intercept { j - 1 } else { j };
            betas[(k, i)]
        }
    });
    let xtx = x.transpose() * &x;
    let solver = SymSolver::new(&xtx, "cross-sectional beta design")?;
    Ok(solver.solve_vec(&(x.transpose() * mean_returns)))
}

fn predict_cs(betas: &DMatrix<f64>, lambda: &DVector<f64>, intercept: bool) -> DVector<f64> {
    let (m, n) = (betas.nrows(), betas.ncols());
    DVector::from_fn(n, |i, _| {
        let mut s = if intercept { lambda[0] } else { 0.0 };
        for k in 0..m {
            s += betas[(k, i)] * lambda[if intercept { k + 1 } else { k }];
        }
        s
    })
}

// ---------------------------------------------------------------------------
// Investment metrics
// ---------------------------------------------------------------------------

/// Tangency-portfolio performance of `model`, with alphas against `benchmarks`.
pub fn investment_metrics(
    panel: &ReturnPanel,
    model: &ModelSet,
    benchmarks: &[ModelSet],
    opts: &InvestOptions,
) -> Result<InvestMetrics> {
    let m = moments(panel, Some(model))?;
    let w = tangency_weights(&m, opts.vol_target)?;
    let series = portfolio_returns(panel, model, &w)?;
    invest_from_series(panel, &series, benchmarks, opts)
}

fn invest_from_series(
    panel: &ReturnPanel,
    series: &[f64],
    benchmarks: &[ModelSet],
    opts: &InvestOptions,
) -> Result<InvestMetrics> {
    let (mean, sd) = frontier::series_mean_sd(series);
    let ann_sharpe = if sd > 0.0 { opts.annualization.sqrt() * mean / sd } else { f64::NAN };
    let mut benchmark_alphas = BTreeMap::new();
    for bench in benchmarks {
        let (alpha, t) = series_alpha(panel, series, bench)?;
        benchmark_alphas.insert(bench.label(), (100.0 * alpha, t));
    }
    Ok(InvestMetrics { avg_return: 100.0 * mean, ann_sharpe, benchmark_alphas })
}

/// Intercept and t-statistic of regressing an external return series on a
/// benchmark factor model.
fn series_alpha(panel: &ReturnPanel, series: &[f64], benchmark: &ModelSet) -> Result<(f64, f64)> {
    if series.len() != panel.n_periods() {
        return Err(Error::DimensionMismatch { context: "series length differs from panel".into() });
    }
    let name = "__SERIES__".to_string();
    let mut names = panel.names().to_vec();
    names.push(name.clone());
    let t = panel.n_periods();
    let data = DMatrix::from_fn(t, names.len(), |r, c| {
        if c < panel.n_assets() {
            panel.returns()[(r, c)]
        } else {
            series[r]
        }
    });
    let combined = ReturnPanel::new(panel.periods().to_vec(), names, data)?;
    let fit = spanning_regression(&combined, &[name], benchmark)?;
    Ok((fit.alphas[0], fit.alpha_t[0]))
}

// ---------------------------------------------------------------------------
// In-sample / out-of-sample fold evaluation
// ---------------------------------------------------------------------------

/// Where the model evaluated on each fold comes from.
#[derive(Debug, Clone)]
pub enum ModelSource {
    /// Use the same model on every fold.
    Fixed(ModelSet),
    /// Re-run stepwise selection on each training sample.
    Reselect { baseline: ModelSet, cfg: SelectionConfig },
}

#[derive(Debug, Clone)]
pub struct OosOptions {
    pub pricing: PricingOptions,
    pub invest: InvestOptions,
    pub benchmarks: Vec<ModelSet>,
}

impl Default for OosOptions {
    fn default() -> Self {
        OosOptions {
            pricing: PricingOptions::default(),
            invest: InvestOptions::default(),
            benchmarks: Vec::new(),
        }
    }
}

/// Metrics for one sample side (train or test) of one fold.
#[derive(Debug, Clone, Serialize)]
pub struct SampleEval {
    /// Unselected candidate factors priced by the model.
    pub pricing: PricingMetrics,
    /// Extra test assets priced by the model, when supplied.
    pub pricing_extra: Option<PricingMetrics>,
    pub invest: InvestMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub model: ModelSet,
    pub ins: SampleEval,
    pub oos: SampleEval,
}

/// Parameters estimated in-sample and frozen for out-of-sample scoring.
struct FrozenPricing {
    targets: Vec<String>,
    model: ModelSet,
    betas: DMatrix<f64>,
    capm_betas: DVector<f64>,
    lambda: DVector<f64>,
    cs_intercept: bool,
    lambda_mkt: f64,
    market: String,
}

impl FrozenPricing {
    fn fit(panel: &ReturnPanel, model: &ModelSet, targets: &[String], opts: &PricingOptions) -> Result<Self> {
        let fit = spanning_regression(panel, targets, model)?;
        let capm = spanning_regression(panel, targets, &ModelSet::new(vec![opts.market.clone()])?)?;
        let n1 = targets.len();
        let mean_targets = DVector::from_fn(n1, |i, _| {
            let mut s = fit.alphas[i];
            for k in 0..model.len() {
                s += fit.betas[(k, i)] * mean_of(panel, &model.names()[k]).unwrap_or(0.0);
            }
            s
        });
        let lambda = cross_sectional_premia(&fit.betas, &mean_targets, opts.cs_intercept)?;
        Ok(FrozenPricing {
            targets: targets.to_vec(),
            model: model.clone(),
            betas: fit.betas,
            capm_betas: DVector::from_fn(n1, |i, _| capm.betas[(0, i)]),
            lambda,
            cs_intercept: opts.cs_intercept,
            lambda_mkt: mean_of(panel, &opts.market)?,
            market: opts.market.clone(),
        })
    }

    /// Scores an evaluation sample with the frozen parameters. Out-of-sample
    /// "alphas" are mean prediction errors `mean(R − β̂'f)` with t-statistics
    /// of that mean.
    fn evaluate(&self, eval: &ReturnPanel) -> Result<PricingMetrics> {
        let n1 = self.targets.len();
        let t = eval.n_periods();
        let model_cols: Vec<usize> =
            self.model.names().iter().map(|n| eval.index_of(n)).collect::<Result<Vec<_>>>()?;
        let target_cols: Vec<usize> =
            self.targets.iter().map(|n| eval.index_of(n)).collect::<Result<Vec<_>>>()?;
        let mkt_col = eval.index_of(&self.market)?;
        let data = eval.returns();

        let mut sse_model = 0.0;
        let mut sse_capm = 0.0;
        let mut abs_alpha = 0.0;
        let mut abs_t = 0.0;
        let mut n_sign2 = 0usize;
        let mut num_cs = 0.0;
        let mut den_cs = 0.0;
        for (i, &tc) in target_cols.iter().enumerate() {
            let mut errs = Vec::with_capacity(t);
            for r in 0..t {
                let mut pred = 0.0;
                for (k, &mc) in model_cols.iter().enumerate() {
                    pred += self.betas[(k, i)] * data[(r, mc)];
                }
                errs.push(data[(r, tc)] - pred);
                let capm_pred = self.capm_betas[i] * data[(r, mkt_col)];
                sse_capm += (data[(r, tc)] - capm_pred).powi(2);
            }
            sse_model += errs.iter().map(|e| e * e).sum::<f64>();
            let (mean_err, sd_err) = frontier::series_mean_sd(&errs);
            abs_alpha += mean_err.abs();
            let t_stat = if sd_err > 0.0 { mean_err / (sd_err / (t as f64).sqrt()) } else { 0.0 };
            abs_t += t_stat.abs().min(1e6);
            if t_stat.abs() > 1.96 {
                n_sign2 += 1;
            }

            let mean_r = data.column(tc).sum() / t as f64;
            let mut pred_cs = if self.cs_intercept { self.lambda[0] } else { 0.0 };
            for k in 0..model_cols.len() {
                pred_cs +=
                    self.betas[(k, i)] * self.lambda[if self.cs_intercept { k + 1 } else { k }];
            }
            num_cs += (mean_r - pred_cs).powi(2);
            den_cs += (mean_r - self.capm_betas[i] * self.lambda_mkt).powi(2);
        }

        Ok(PricingMetrics {
            avg_abs_alpha: 100.0 * abs_alpha / n1 as f64,
            avg_abs_t: abs_t / n1 as f64,
            n_sign2,
            total_r2: if sse_capm > 0.0 { 100.0 * (1.0 - sse_model / sse_capm) } else { 0.0 },
            cs_r2: if den_cs > 0.0 { 100.0 * (1.0 - num_cs / den_cs) } else { 0.0 },
        })
    }
}

/// Trains on each fold's complement and scores the fold with frozen
/// parameters. Returns one outcome per fold.
pub fn oos_evaluate(
    panel: &ReturnPanel,
    extra: Option<&ReturnPanel>,
    folds: &FoldSplit,
    source: &ModelSource,
    opts: &OosOptions,
) -> Result<Vec<FoldOutcome>> {
    if folds.k() < 2 {
        return Err(Error::InvalidParam {
            name: "folds".into(),
            reason: "out-of-sample evaluation needs at least two folds".into(),
        });
    }
    if folds.total() != panel.n_periods() {
        return Err(Error::DimensionMismatch {
            context: format!("folds cover {} periods, panel has {}", folds.total(), panel.n_periods()),
        });
    }
    let combined = match extra {
        Some(e) => Some(panel.hstack(e)?),
        None => None,
    };

    let mut outcomes = Vec::with_capacity(folds.k());
    for f in 0..folds.k() {
        let train_rows = folds.complement(f);
        let test_rows: Vec<usize> = folds.fold(f).clone().collect();
        let train = panel.select_rows(&train_rows)?;
        let test = panel.select_rows(&test_rows)?;
        let train_extra = extra.map(|e| e.select_rows(&train_rows)).transpose()?;

        let model = match source {
            ModelSource::Fixed(m) => {
                train.subset(Some(&m.names().to_vec()), None)?; // validates names
                m.clone()
            }
            ModelSource::Reselect { baseline, cfg } => {
                stepwise_select(&train, baseline, train_extra.as_ref(), cfg)?.0
            }
        };
        if train.n_periods() <= model.len() + 1 {
            return Err(Error::InvalidParam {
                name: "folds".into(),
                reason: "training sample too short for the model size".into(),
            });
        }
        let targets: Vec<String> =
            panel.names().iter().filter(|n| !model.contains(n)).cloned().collect();

        // in-sample: everything estimated and evaluated on the training rows
        let ins_pricing = pricing_metrics(&train, &model, &targets, &opts.pricing)?;
        let ins_extra = match &combined {
            Some(c) => {
                let ctrain = c.select_rows(&train_rows)?;
                Some(pricing_metrics(&ctrain, &model, extra.unwrap().names(), &opts.pricing)?)
            }
            None => None,
        };
        let train_moments = moments(&train, Some(&model))?;
        let weights = tangency_weights(&train_moments, opts.invest.vol_target)?;
        let ins_series = portfolio_returns(&train, &model, &weights)?;
        let ins_invest = invest_from_series(&train, &ins_series, &opts.benchmarks, &opts.invest)?;

        // out-of-sample: frozen betas, premia, and weights applied to the fold
        let frozen = FrozenPricing::fit(&train, &model, &targets, &opts.pricing)?;
        let oos_pricing = frozen.evaluate(&test)?;
        let oos_extra = match &combined {
            Some(c) => {
                let ctrain = c.select_rows(&train_rows)?;
                let ctest = c.select_rows(&test_rows)?;
                let fr = FrozenPricing::fit(&ctrain, &model, extra.unwrap().names(), &opts.pricing)?;
                Some(fr.evaluate(&ctest)?)
            }
            None => None,
        };
        let oos_series = portfolio_returns(&test, &model, &weights)?;
        let oos_invest = invest_from_series(&test, &oos_series, &opts.benchmarks, &opts.invest)?;

        outcomes.push(FoldOutcome {
            fold: f + 1,
            model,
            ins: SampleEval { pricing: ins_pricing, pricing_extra: ins_extra, invest: ins_invest },
            oos: SampleEval { pricing: oos_pricing, pricing_extra: oos_extra, invest: oos_invest },
        });
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------------------
// Paired-month bootstrap
// ---------------------------------------------------------------------------

/// Bootstrap comparison of models by in-sample SR² and out-of-sample Sharpe.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapReport {
    pub models: Vec<String>,
    /// Mean in-sample SR² per run (per-period units).
    pub mean_ins_sr2: Vec<f64>,
    /// Mean signed square of the out-of-sample Sharpe ratio of the in-sample
    /// tangency weights.
    pub mean_oos_sr2: Vec<f64>,
    /// `beat_ins[i][j]`: % of runs where model i's in-sample Sharpe strictly
    /// exceeds model j's. Ties count toward neither side, so
    /// `beat[i][j] + beat[j][i] ≤ 100` with the gap being tie mass.
    pub beat_ins: Vec<Vec<f64>>,
    pub beat_oos: Vec<Vec<f64>>,
    /// % of runs where the model is the strict best (ties go to the earliest
    /// model in the list).
    pub best_ins: Vec<f64>,
    pub best_oos: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    /// Resamples redrawn because a model's in-sample covariance was singular.
    pub redrawn: usize,
    pub dropped_trailing_month: bool,
}

/// One run's month assignment. In-sample months form a multiset (pairs drawn
/// with replacement); out-of-sample months are the unused halves of every
/// sampled pair, each once, in time order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RunDraw {
    pub ins_rows: Vec<usize>,
    pub oos_rows: Vec<usize>,
}

/// Draws one bootstrap run over `n_pairs` consecutive month pairs. Each pair
/// gets a fixed in/out orientation for the run; drawing then samples pairs
/// with replacement.
pub(crate) fn draw_run(rng: &mut impl Rng, n_pairs: usize) -> RunDraw {
    let draws: Vec<usize> = (0..n_pairs).map(|_| rng.gen_range(0..n_pairs)).collect();
    let orient: Vec<bool> = (0..n_pairs).map(|_| rng.gen()).collect();
    let ins_rows: Vec<usize> =
        draws.iter().map(|&p| 2 * p + usize::from(!orient[p])).collect();
    let mut sampled: Vec<usize> = draws.clone();
    sampled.sort_unstable();
    sampled.dedup();
    let oos_rows: Vec<usize> = sampled.iter().map(|&p| 2 * p + usize::from(orient[p])).collect();
    RunDraw { ins_rows, oos_rows }
}

struct RunOutcome {
    ins_sr2: Vec<f64>,
    oos_sharpe: Vec<f64>,
    redraws: usize,
}

fn run_once(
    data: &DMatrix<f64>,
    model_cols: &[Vec<usize>],
    n_pairs: usize,
    seed: u64,
    run_idx: usize,
) -> Result<RunOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_idx as u64 + 1);
    const MAX_REDRAWS: usize = 100;
    let mut redraws = 0;
    'attempt: loop {
        let draw = draw_run(&mut rng, n_pairs);
        let mut ins_sr2 = Vec::with_capacity(model_cols.len());
        let mut oos_sharpe = Vec::with_capacity(model_cols.len());
        for cols in model_cols {
            let m = cols.len();
            let p = draw.ins_rows.len() as f64;
            let mut mean = DVector::zeros(m);
            for &r in &draw.ins_rows {
                for (k, &c) in cols.iter().enumerate() {
                    mean[k] += data[(r, c)];
                }
            }
            mean /= p;
            let mut cov = DMatrix::zeros(m, m);
            for &r in &draw.ins_rows {
                for (a, &ca) in cols.iter().enumerate() {
                    let da = data[(r, ca)] - mean[a];
                    for (b, &cb) in cols.iter().enumerate().skip(a) {
                        cov[(a, b)] += da * (data[(r, cb)] - mean[b]);
                    }
                }
            }
            for a in 0..m {
                for b in a..m {
                    let v = cov[(a, b)] / p;
                    cov[(a, b)] = v;
                    cov[(b, a)] = v;
                }
            }
            let solver = match SymSolver::new(&cov, "bootstrap in-sample covariance") {
                Ok(s) => s,
                Err(_) => {
                    redraws += 1;
                    if redraws > MAX_REDRAWS {
                        return Err(Error::BootstrapRetryCap { failures: redraws });
                    }
                    continue 'attempt;
                }
            };
            let weights = solver.solve_vec(&mean);
            ins_sr2.push(mean.dot(&weights));
            let series: Vec<f64> = draw
                .oos_rows
                .iter()
                .map(|&r| cols.iter().enumerate().map(|(k, &c)| weights[k] * data[(r, c)]).sum())
                .collect();
            let (om, osd) = frontier::series_mean_sd(&series);
            if !(osd > 0.0) {
                redraws += 1;
                if redraws > MAX_REDRAWS {
                    return Err(Error::BootstrapRetryCap { failures: redraws });
                }
                continue 'attempt;
            }
            oos_sharpe.push(om / osd);
        }
        return Ok(RunOutcome { ins_sr2, oos_sharpe, redraws });
    }
}

/// Paired-month bootstrap comparison of `models`.
///
/// The sample is split into consecutive month pairs (a trailing odd month is
/// dropped with a warning). Each run draws pairs with replacement, computes
/// every model's in-sample SR² and tangency weights on the drawn months, and
/// realizes those weights on the unused months for the out-of-sample Sharpe
/// ratio. Runs derive independent RNG streams from `(seed, run)`, so reports
/// are identical at any parallelism level.
pub fn bootstrap_sr(
    panel: &ReturnPanel,
    models: &[ModelSet],
    runs: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    if models.is_empty() {
        return Err(Error::EmptySelection { context: "bootstrap needs at least one model".into() });
    }
    if runs < 1 {
        return Err(Error::InvalidParam { name: "runs".into(), reason: "need at least one run".into() });
    }
    let mut t = panel.n_periods();
    let dropped = t % 2 == 1;
    if dropped {
        log::warn!("odd sample length {t}: dropping the trailing month for pairing");
        t -= 1;
    }
    if t < 4 {
        return Err(Error::InvalidParam {
            name: "panel".into(),
            reason: "bootstrap needs at least four periods".into(),
        });
    }
    let n_pairs = t / 2;
    let model_cols: Vec<Vec<usize>> = models
        .iter()
        .map(|m| m.names().iter().map(|n| panel.index_of(n)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let data = panel.returns();

    let outcomes: Vec<Result<RunOutcome>> = (0..runs)
        .into_par_iter()
        .map(|run_idx| run_once(data, &model_cols, n_pairs, seed, run_idx))
        .collect();

    let k = models.len();
    let mut mean_ins = vec![0.0; k];
    let mut mean_oos = vec![0.0; k];
    let mut beat_ins = vec![vec![0.0; k]; k];
    let mut beat_oos = vec![vec![0.0; k]; k];
    let mut best_ins = vec![0.0; k];
    let mut best_oos = vec![0.0; k];
    let mut redrawn = 0;
    for outcome in outcomes {
        let o = outcome?;
        redrawn += o.redraws;
        for i in 0..k {
            mean_ins[i] += o.ins_sr2[i];
            mean_oos[i] += o.oos_sharpe[i] * o.oos_sharpe[i].abs();
            for j in 0..k {
                if i != j {
                    if o.ins_sr2[i] > o.ins_sr2[j] {
                        beat_ins[i][j] += 1.0;
                    }
                    if o.oos_sharpe[i] > o.oos_sharpe[j] {
                        beat_oos[i][j] += 1.0;
                    }
                }
            }
        }
        let arg_best = |v: &[f64]| -> usize {
            let mut bi = 0;
            for (i, &x) in v.iter().enumerate().skip(1) {
                if x > v[bi] {
                    bi = i;
                }
            }
            bi
        };
        best_ins[arg_best(&o.ins_sr2)] += 1.0;
        best_oos[arg_best(&o.oos_sharpe)] += 1.0;
    }
    let rf = runs as f64;
    for i in 0..k {
        mean_ins[i] /= rf;
        mean_oos[i] /= rf;
        best_ins[i] *= 100.0 / rf;
        best_oos[i] *= 100.0 / rf;
        for j in 0..k {
            beat_ins[i][j] *= 100.0 / rf;
            beat_oos[i][j] *= 100.0 / rf;
        }
    }

    Ok(BootstrapReport {
        models: models.iter().map(|m| m.label()).collect(),
        mean_ins_sr2: mean_ins,
        mean_oos_sr2: mean_oos,
        beat_ins,
        beat_oos,
        best_ins,
        best_oos,
        runs,
        seed,
        redrawn,
        dropped_trailing_month: dropped,
    })
}

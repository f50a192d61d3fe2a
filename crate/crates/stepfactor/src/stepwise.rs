//! Forward and backward stepwise evaluation of factor models.
//!
//! Forward stepwise evaluation (FSE) grows a baseline model one factor at a
//! time: at each step every unselected candidate is scored by the maximal
//! squared Sharpe ratio of the would-be expanded model (equivalently, by the
//! GRS value it would leave on the remaining assets — the two rankings
//! coincide), the best factor is added, and a joint pricing test decides
//! whether to keep going. Expansion stops at the first model the stop-rule
//! test fails to reject.
//!
//! Backward stepwise evaluation (BSE) prunes an efficient model: at each step
//! the factor whose removal hurts the model SR² least is dropped, until a
//! removal makes the pricing test reject — that removal is reverted and the
//! previous model returned.
//!
//! Candidate scans are a parallel map followed by a deterministic reduction;
//! ties on the selection value are broken by the lexicographically smallest
//! factor name, so results are independent of panel column order and worker
//! scheduling.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frontier::{ModelSet, PanelMoments};
use crate::panel::ReturnPanel;
use crate::testing::{grs_test_ws, grs_value_ws, hda_test_ws, HdaConfig, TestResult};

/// Which joint pricing test gates each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StopRule {
    Hda,
    Grs,
}

/// How candidate factors are ranked within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionCriterion {
    /// Rank by the SR² of the whole would-be model (the duality route).
    ModelSr2,
    /// Rank by each factor's marginal single-factor SR² alone.
    SingleFactorSr2,
}

/// Tie handling on equal selection values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    LexicographicByName,
}

#[derive(Debug, Clone)]
pub struct SelectionConfig {
    /// Significance level λ of the stop-rule test.
    pub significance: f64,
    pub stop_rule: StopRule,
    pub criterion: SelectionCriterion,
    /// Cap on steps per direction; `None` means `min(N − 2, T / 3)`.
    pub max_steps: Option<usize>,
    pub tie_break: TieBreak,
    /// Residual-correlation screen level for the HDA stop test.
    pub screening_level: Option<f64>,
    /// Whether extra test assets (when supplied) enter the stop-rule test's
    /// LHS and universe. They never become selection candidates.
    pub stop_with_extra_assets: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            significance: 0.05,
            stop_rule: StopRule::Hda,
            criterion: SelectionCriterion::ModelSr2,
            max_steps: None,
            tie_break: TieBreak::LexicographicByName,
            screening_level: None,
            stop_with_extra_assets: true,
        }
    }
}

impl SelectionConfig {
    fn validate(&self) -> Result<()> {
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::InvalidParam {
                name: "significance".into(),
                reason: "must lie strictly between 0 and 1".into(),
            });
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidParam {
                name: "max_steps".into(),
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    fn hda(&self) -> HdaConfig {
        HdaConfig { significance: self.significance, screening_level: self.screening_level }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepAction {
    Add,
    Remove,
}

/// One step of a selection path. `sr2`, `grs`, and the stop-test fields all
/// describe the RHS model *after* the action. `grs` is NaN when the
/// full-universe SR² is undefined (exactly collinear panel columns).
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: StepAction,
    pub factor: String,
    pub grs: f64,
    pub sr2: f64,
    /// Stop-rule test statistic (HDA by default, GRS under the GRS rule).
    pub hda_stat: f64,
    pub hda_p: f64,
    /// True on the step that ended the phase. For FSE the addition is kept;
    /// for BSE the recorded removal was rejected and reverted.
    pub stopped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedCandidate {
    pub step: usize,
    pub factor: String,
    pub reason: String,
}

/// Trace of one FSE/BSE run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SelectionPath {
    pub steps: Vec<StepRecord>,
    pub skipped: Vec<SkippedCandidate>,
    /// False when the phase hit its step cap (or ran out of assets) while the
    /// stop-rule test still rejected.
    pub converged: bool,
}

impl SelectionPath {
    fn converged() -> Self {
        SelectionPath { steps: Vec::new(), skipped: Vec::new(), converged: true }
    }

    /// Appends `other`, renumbering its steps to continue this path.
    fn extend(&mut self, other: SelectionPath) {
        let offset = self.steps.len();
        for mut s in other.steps {
            s.step += offset;
            self.steps.push(s);
        }
        for mut s in other.skipped {
            s.step += offset;
            self.skipped.push(s);
        }
        self.converged = self.converged && other.converged;
    }
}

/// Verdict on a single factor evaluated inside a baseline.
#[derive(Debug, Clone, Serialize)]
pub struct FactorVerdict {
    pub factor: String,
    /// True when the factor survives the full forward-backward pass.
    pub selected: bool,
    pub final_model: ModelSet,
}

// ---------------------------------------------------------------------------
// Workspace
// ---------------------------------------------------------------------------

/// Moment caches shared by every step of a selection run. The `full`
/// workspace (panel plus optional extra test assets) prices step records; the
/// stop-rule test uses the same universe unless the configuration excludes
/// extra assets from it.
#[derive(Debug, Clone)]
pub(crate) struct SelectionWorkspace {
    pub full: PanelMoments,
    stop_separate: Option<PanelMoments>,
    n_factors: usize,
}

impl SelectionWorkspace {
    pub(crate) fn new(
        panel: &ReturnPanel,
        extra: Option<&ReturnPanel>,
        cfg: &SelectionConfig,
    ) -> Result<Self> {
        let full = PanelMoments::from_panels(panel, extra)?;
        let stop_separate = if extra.is_some() && !cfg.stop_with_extra_assets {
            Some(PanelMoments::from_panel(panel)?)
        } else {
            None
        };
        let n_factors = panel.n_assets();
        Ok(SelectionWorkspace { full, stop_separate, n_factors })
    }

    pub(crate) fn from_moments(moments: PanelMoments) -> Self {
        let n_factors = moments.n_factor_columns;
        SelectionWorkspace { full: moments, stop_separate: None, n_factors }
    }

    fn stop_ws(&self) -> &PanelMoments {
        self.stop_separate.as_ref().unwrap_or(&self.full)
    }

    /// Candidate factor names (never extra test assets), sorted.
    fn candidate_names(&self, exclude: &ModelSet) -> Vec<String> {
        let mut names: Vec<String> = self.full.names[..self.n_factors]
            .iter()
            .filter(|n| !exclude.contains(n))
            .cloned()
            .collect();
        names.sort();
        names
    }

    fn model_sr2(&self, model: &ModelSet) -> Result<f64> {
        let idx = self.full.resolve_canonical(model.names())?;
        self.full.sr2(&idx, "model covariance")
    }

    fn stop_test(&self, model: &ModelSet, cfg: &SelectionConfig) -> Result<TestResult> {
        let ws = self.stop_ws();
        let idx = ws.resolve_canonical(model.names())?;
        match cfg.stop_rule {
            StopRule::Hda => hda_test_ws(ws, &idx, &cfg.hda()),
            StopRule::Grs => grs_test_ws(ws, &idx),
        }
    }

    /// True when the stop-rule test is still well-posed for a model of size `m`.
    fn stop_feasible(&self, m: usize, cfg: &SelectionConfig) -> bool {
        let ws = self.stop_ws();
        let n = ws.names.len();
        match cfg.stop_rule {
            StopRule::Hda => n >= m + 2 && ws.t_obs > m + 2,
            StopRule::Grs => n >= m + 1 && ws.t_obs > n,
        }
    }

    fn record_grs(&self, model: &ModelSet) -> f64 {
        self.full
            .resolve_canonical(model.names())
            .and_then(|idx| grs_value_ws(&self.full, &idx))
            .unwrap_or(f64::NAN)
    }

    fn default_cap(&self, cfg: &SelectionConfig) -> usize {
        cfg.max_steps
            .unwrap_or_else(|| (self.n_factors.saturating_sub(2)).min(self.full.t_obs / 3).max(1))
    }

    /// Marginal single-factor SR² of one panel column.
    fn marginal_sr2(&self, name: &str) -> Result<f64> {
        let j = self.full.index[name];
        let var = self.full.cov[(j, j)];
        if var <= 0.0 {
            return Err(Error::SingularCovariance {
                cond: f64::INFINITY,
                context: format!("factor `{name}` has zero variance"),
            });
        }
        Ok(self.full.mean[j] * self.full.mean[j] / var)
    }
}

#[derive(Debug, Clone)]
struct Scored {
    value: f64,
    name: String,
}

/// Deterministic reduction: larger value wins, exact ties go to the
/// lexicographically smaller name.
fn better_max(a: Scored, b: Scored) -> Scored {
    if b.value > a.value || (b.value == a.value && b.name < a.name) {
        b
    } else {
        a
    }
}

/// Smaller value wins, ties to the lexicographically smaller name.
fn better_min(a: Scored, b: Scored) -> Scored {
    if b.value < a.value || (b.value == a.value && b.name < a.name) {
        b
    } else {
        a
    }
}

enum ScanOutcome {
    Scored(Scored),
    Skipped { factor: String, reason: String },
}

/// Scores every candidate in parallel and reduces deterministically.
fn scan<F>(candidates: &[String], score: F, pick_max: bool) -> (Option<Scored>, Vec<(String, String)>)
where
    F: Fn(&str) -> Result<f64> + Sync,
{
    let outcomes: Vec<ScanOutcome> = candidates
        .par_iter()
        .map(|name| match score(name) {
            Ok(value) if value.is_finite() => ScanOutcome::Scored(Scored { value, name: name.clone() }),
            Ok(value) => ScanOutcome::Skipped { factor: name.clone(), reason: format!("non-finite score {value}") },
            Err(e) => ScanOutcome::Skipped { factor: name.clone(), reason: e.to_string() },
        })
        .collect();
    let mut best: Option<Scored> = None;
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            ScanOutcome::Scored(s) => {
                best = Some(match best {
                    None => s,
                    Some(b) => {
                        if pick_max {
                            better_max(b, s)
                        } else {
                            better_min(b, s)
                        }
                    }
                });
            }
            ScanOutcome::Skipped { factor, reason } => skipped.push((factor, reason)),
        }
    }
    (best, skipped)
}

// ---------------------------------------------------------------------------
// FSE
// ---------------------------------------------------------------------------

pub(crate) fn fse_ws(
    ws: &SelectionWorkspace,
    baseline: &ModelSet,
    cfg: &SelectionConfig,
) -> Result<(ModelSet, SelectionPath)> {
    cfg.validate()?;
    ws.full.resolve(baseline.names())?; // unknown names fail fast
    for name in baseline.names() {
        if ws.full.index[name] >= ws.n_factors {
            return Err(Error::InvalidParam {
                name: "baseline".into(),
                reason: format!("`{name}` is an extra test asset, not a candidate factor"),
            });
        }
    }

    // Entry check: an efficient baseline needs no expansion.
    let entry = ws.stop_test(baseline, cfg)?;
    if !entry.rejects(cfg.significance) {
        return Ok((baseline.clone(), SelectionPath::converged()));
    }

    let cap = ws.default_cap(cfg);
    let mut model = baseline.clone();
    let mut path = SelectionPath::default();
    let mut last_sr2 = f64::NEG_INFINITY;

    for step in 1..=cap {
        if !ws.stop_feasible(model.len() + 1, cfg) {
            break; // still rejecting but nothing testable remains
        }
        let mut candidates = ws.candidate_names(&model);
        if candidates.is_empty() {
            break;
        }

        // The SR criterion ranks by marginal SR² alone, so its pick can still
        // break the expanded model; retry on the remaining set.
        let chosen = loop {
            let (best, skipped) = match cfg.criterion {
                SelectionCriterion::ModelSr2 => {
                    scan(&candidates, |name| ws.model_sr2(&model.with(name)), true)
                }
                SelectionCriterion::SingleFactorSr2 => {
                    scan(&candidates, |name| ws.marginal_sr2(name), true)
                }
            };
            for (factor, reason) in skipped {
                candidates.retain(|c| c != &factor);
                path.skipped.push(SkippedCandidate { step, factor, reason });
            }
            let best = match best {
                Some(b) => b,
                None => return Err(Error::AllCandidatesFailed { step }),
            };
            let expanded = model.with(&best.name);
            match ws.model_sr2(&expanded) {
                Ok(sr2) => break (best.name, sr2, expanded),
                Err(e) => {
                    candidates.retain(|c| c != &best.name);
                    path.skipped.push(SkippedCandidate {
                        step,
                        factor: best.name,
                        reason: e.to_string(),
                    });
                    if candidates.is_empty() {
                        return Err(Error::AllCandidatesFailed { step });
                    }
                }
            }
        };
        let (factor, sr2, expanded) = chosen;

        let test = ws.stop_test(&expanded, cfg)?;
        let stopped = !test.rejects(cfg.significance);
        path.steps.push(StepRecord {
            step,
            action: StepAction::Add,
            factor,
            grs: ws.record_grs(&expanded),
            sr2,
            hda_stat: test.statistic,
            hda_p: test.p_value,
            stopped,
        });
        debug_assert!(sr2 >= last_sr2 - 1e-12);
        last_sr2 = sr2;
        model = expanded;
        if stopped {
            path.converged = true;
            return Ok((model, path));
        }
    }
    path.converged = false;
    Ok((model, path))
}

/// Expands `baseline` by forward stepwise evaluation.
///
/// Stops at the first expanded model the stop-rule test fails to reject at
/// level λ; an already-efficient baseline returns unchanged with an empty
/// path. Candidates whose addition is numerically degenerate are skipped and
/// recorded rather than aborting the run.
pub fn fse(
    panel: &ReturnPanel,
    baseline: &ModelSet,
    extra: Option<&ReturnPanel>,
    cfg: &SelectionConfig,
) -> Result<(ModelSet, SelectionPath)> {
    let ws = SelectionWorkspace::new(panel, extra, cfg)?;
    fse_ws(&ws, baseline, cfg)
}

// ---------------------------------------------------------------------------
// BSE
// ---------------------------------------------------------------------------

pub(crate) fn bse_ws(
    ws: &SelectionWorkspace,
    input: &ModelSet,
    cfg: &SelectionConfig,
) -> Result<(ModelSet, SelectionPath)> {
    cfg.validate()?;
    ws.full.resolve(input.names())?;
    if input.len() < 2 {
        return Err(Error::InvalidParam {
            name: "model".into(),
            reason: "backward evaluation needs at least two factors".into(),
        });
    }
    match ws.stop_test(input, cfg) {
        Ok(entry) => {
            if entry.rejects(cfg.significance) {
                log::warn!(
                    "model {} fails the stop-rule test on entry (p = {:.4}); pruning it anyway",
                    input.label(),
                    entry.p_value
                );
            }
        }
        Err(e) => log::warn!("entry test on {} not computable: {e}", input.label()),
    }

    let cap = ws.default_cap(cfg);
    let mut model = input.clone();
    let mut path = SelectionPath::default();
    path.converged = true;

    for step in 1..=cap {
        if model.len() < 2 {
            break;
        }
        let mut members: Vec<String> = model.names().to_vec();
        members.sort();

        let (best, skipped) = match cfg.criterion {
            SelectionCriterion::ModelSr2 => scan(
                &members,
                |name| ws.model_sr2(&model.without(name).expect("len >= 2")),
                true,
            ),
            // rank members by their own SR² and drop the weakest
            SelectionCriterion::SingleFactorSr2 => {
                scan(&members, |name| ws.marginal_sr2(name), false)
            }
        };
        for (factor, reason) in skipped {
            path.skipped.push(SkippedCandidate { step, factor, reason });
        }
        let best = match best {
            Some(b) => b,
            None => return Err(Error::AllCandidatesFailed { step }),
        };
        let reduced = model.without(&best.name).expect("len >= 2");
        let sr2 = match cfg.criterion {
            SelectionCriterion::ModelSr2 => best.value,
            SelectionCriterion::SingleFactorSr2 => ws.model_sr2(&reduced)?,
        };

        let test = ws.stop_test(&reduced, cfg)?;
        let rejected = test.rejects(cfg.significance);
        path.steps.push(StepRecord {
            step,
            action: StepAction::Remove,
            factor: best.name,
            grs: ws.record_grs(&reduced),
            sr2,
            hda_stat: test.statistic,
            hda_p: test.p_value,
            stopped: rejected,
        });
        if rejected {
            // the removal broke efficiency: keep the pre-removal model
            return Ok((model, path));
        }
        model = reduced;
        if step == cap && model.len() >= 2 {
            path.converged = false;
        }
    }
    Ok((model, path))
}

/// Prunes `model` by backward stepwise evaluation.
///
/// At each step the factor whose removal leaves the largest model SR² is
/// dropped; the first removal that makes the stop-rule test reject is
/// reverted and the surviving model returned. A model whose every removal is
/// rejected comes back unchanged, with the rejected attempt on record.
pub fn bse(
    panel: &ReturnPanel,
    model: &ModelSet,
    extra: Option<&ReturnPanel>,
    cfg: &SelectionConfig,
) -> Result<(ModelSet, SelectionPath)> {
    let ws = SelectionWorkspace::new(panel, extra, cfg)?;
    bse_ws(&ws, model, cfg)
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

pub(crate) fn stepwise_select_ws(
    ws: &SelectionWorkspace,
    baseline: &ModelSet,
    cfg: &SelectionConfig,
) -> Result<(ModelSet, SelectionPath)> {
    let (expanded, mut path) = fse_ws(ws, baseline, cfg)?;
    if expanded.len() < 2 {
        return Ok((expanded, path));
    }
    let (reduced, bse_path) = bse_ws(ws, &expanded, cfg)?;
    path.extend(bse_path);
    Ok((reduced, path))
}

/// Full two-phase selection: forward expansion, then backward pruning.
///
/// A baseline that already passes the stop-rule test skips straight to
/// pruning. The returned path concatenates both phases with continuous step
/// numbering.
pub fn stepwise_select(
    panel: &ReturnPanel,
    baseline: &ModelSet,
    extra: Option<&ReturnPanel>,
    cfg: &SelectionConfig,
) -> Result<(ModelSet, SelectionPath)> {
    let ws = SelectionWorkspace::new(panel, extra, cfg)?;
    stepwise_select_ws(&ws, baseline, cfg)
}

/// Tests one factor by running the full selection from `core ∪ {factor}` and
/// checking whether the factor survives pruning.
pub fn evaluate_factor(
    panel: &ReturnPanel,
    factor: &str,
    core: &ModelSet,
    extra: Option<&ReturnPanel>,
    cfg: &SelectionConfig,
) -> Result<FactorVerdict> {
    if core.contains(factor) {
        return Err(Error::InvalidParam {
            name: "factor".into(),
            reason: format!("`{factor}` is already part of the core model"),
        });
    }
    panel.index_of(factor)?;
    let baseline = core.with(factor);
    let (final_model, _path) = stepwise_select(panel, &baseline, extra, cfg)?;
    Ok(FactorVerdict {
        factor: factor.to_string(),
        selected: final_model.contains(factor),
        final_model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
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

    /// Two priced drivers plus dependents that load on them; a model holding
    /// both drivers prices everything, a model holding one does not.
    fn two_driver_panel(rng: &mut ChaCha8Rng, t: usize, n_dep: usize) -> ReturnPanel {
        let d0: Vec<f64> = (0..t).map(|_| 0.006 + rng.sample::<f64, _>(StandardNormal) * 0.03).collect();
        let d1: Vec<f64> = (0..t).map(|_| 0.005 + rng.sample::<f64, _>(StandardNormal) * 0.025).collect();
        let mut cols = vec![("D0".to_string(), d0.clone()), ("D1".to_string(), d1.clone())];
        for j in 0..n_dep {
            let b0 = rng.gen_range(-0.8..0.8);
            let b1 = rng.gen_range(-0.8..0.8);
            let series: Vec<f64> = (0..t)
                .map(|r| b0 * d0[r] + b1 * d1[r] + rng.sample::<f64, _>(StandardNormal) * 0.015)
                .collect();
            cols.push((format!("A{:02}", j), series));
        }
        panel_from(cols)
    }

    #[test]
    fn fse_recovers_missing_driver_then_stops() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let p = two_driver_panel(&mut rng, 900, 12);
        let baseline = ModelSet::parse("D0").unwrap();
        let (model, path) = fse(&p, &baseline, None, &SelectionConfig::default()).unwrap();
        assert!(model.contains("D1"), "final model: {:?}", model.names());
        assert_eq!(model.names()[0], "D0");
        assert!(path.converged);
        assert!(path.steps.last().unwrap().stopped);
    }

    #[test]
    fn fse_no_additions_when_baseline_spans_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let t = 240;
        let d0: Vec<f64> = (0..t).map(|_| 0.006 + rng.sample::<f64, _>(StandardNormal) * 0.03).collect();
        let d1: Vec<f64> = (0..t).map(|_| 0.002 + rng.sample::<f64, _>(StandardNormal) * 0.02).collect();
        let mut cols = vec![("D0".to_string(), d0.clone()), ("D1".to_string(), d1.clone())];
        for (j, (b0, b1)) in [(0.5, -0.7), (1.3, 0.2), (-0.4, 1.1)].iter().enumerate() {
            let series: Vec<f64> = (0..t).map(|r| b0 * d0[r] + b1 * d1[r]).collect();
            cols.push((format!("C{j}"), series));
        }
        let p = panel_from(cols);
        let (model, path) =
            fse(&p, &ModelSet::parse("D0,D1").unwrap(), None, &SelectionConfig::default()).unwrap();
        assert_eq!(model.names(), &["D0", "D1"]);
        assert!(path.steps.is_empty());
        assert!(path.converged);
    }

    #[test]
    fn bse_removes_pure_noise_factor_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let mut hits = 0;
        let reps = 20;
        for _ in 0..reps {
            let t = 700;
            let p = two_driver_panel(&mut rng, t, 10);
            let noise: Vec<f64> = (0..t).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.02).collect();
            let noise_panel = panel_from(vec![("ZNOISE".to_string(), noise)]);
            let p = p.hstack(&noise_panel).unwrap();
            let model = ModelSet::parse("D0,D1,ZNOISE").unwrap();
            let (reduced, path) = bse(&p, &model, None, &SelectionConfig::default()).unwrap();
            if path.steps.first().map(|s| s.factor.as_str()) == Some("ZNOISE")
                && !reduced.contains("ZNOISE")
            {
                hits += 1;
            }
        }
        assert!(hits >= reps - 3, "noise factor removed first in only {hits}/{reps} runs");
    }

    #[test]
    fn bse_returns_input_when_both_factors_required() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let p = two_driver_panel(&mut rng, 900, 12);
        let model = ModelSet::parse("D0,D1").unwrap();
        let (reduced, path) = bse(&p, &model, None, &SelectionConfig::default()).unwrap();
        assert!(reduced.same_set(&model));
        assert_eq!(path.steps.len(), 1);
        assert!(path.steps[0].stopped);
        assert_eq!(path.steps[0].action, StepAction::Remove);
    }

    #[test]
    fn stepwise_select_composes_and_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        let p = two_driver_panel(&mut rng, 900, 12);
        let cfg = SelectionConfig::default();
        let (model, path) = stepwise_select(&p, &ModelSet::parse("D0").unwrap(), None, &cfg).unwrap();
        assert!(model.contains("D0") && model.contains("D1"));
        assert!(path.converged);
        // pruning the selected model again removes nothing
        let (again, _) = bse(&p, &model, None, &cfg).unwrap();
        assert!(again.same_set(&model));
    }

    #[test]
    fn step_values_match_duality_at_every_step() {
        use crate::frontier::{max_sq_sharpe, moments};
        use crate::testing::grs_value;
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let p = two_driver_panel(&mut rng, 400, 8);
        // force a long path: an extreme λ never stops the expansion
        let cfg = SelectionConfig {
            significance: 1.0 - 1e-12,
            max_steps: Some(4),
            ..SelectionConfig::default()
        };
        let (_, path) = fse(&p, &ModelSet::parse("D0").unwrap(), None, &cfg).unwrap();
        assert_eq!(path.steps.len(), 4);
        let mut current = ModelSet::parse("D0").unwrap();
        for rec in &path.steps {
            let mut best_grs: Option<(f64, String)> = None;
            let mut best_sr2: Option<(f64, String)> = None;
            for cand in p.names().iter().filter(|n| !current.contains(n)) {
                let m = current.with(cand);
                let g = grs_value(&p, &m, None).unwrap();
                let s = max_sq_sharpe(&moments(&p, Some(&m)).unwrap()).unwrap();
                if best_grs.as_ref().map_or(true, |(v, _)| g < *v) {
                    best_grs = Some((g, cand.clone()));
                }
                if best_sr2.as_ref().map_or(true, |(v, _)| s > *v) {
                    best_sr2 = Some((s, cand.clone()));
                }
            }
            assert_eq!(best_grs.as_ref().unwrap().1, rec.factor);
            assert_eq!(best_sr2.as_ref().unwrap().1, rec.factor);
            current = current.with(&rec.factor);
        }
    }

    #[test]
    fn paths_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let p = two_driver_panel(&mut rng, 400, 8);
        let cfg = SelectionConfig {
            significance: 1.0 - 1e-12,
            max_steps: Some(5),
            ..SelectionConfig::default()
        };
        let (expanded, fpath) = fse(&p, &ModelSet::parse("D0").unwrap(), None, &cfg).unwrap();
        let mut prev_sr2 = 0.0;
        let mut prev_grs = f64::INFINITY;
        for rec in &fpath.steps {
            assert!(rec.sr2 > prev_sr2 - 1e-12, "FSE SR² not increasing");
            assert!(rec.grs <= prev_grs + 1e-9, "FSE GRS not decreasing");
            prev_sr2 = rec.sr2;
            prev_grs = rec.grs;
        }
        // a permissive λ lets BSE strip the model to one factor
        let bcfg = SelectionConfig { significance: 1e-12, ..SelectionConfig::default() };
        let (reduced, bpath) = bse(&p, &expanded, None, &bcfg).unwrap();
        assert_eq!(reduced.len(), 1);
        let mut prev = f64::INFINITY;
        for rec in &bpath.steps {
            assert!(rec.sr2 <= prev + 1e-12, "BSE SR² not decreasing");
            prev = rec.sr2;
        }
    }

    #[test]
    fn column_permutation_leaves_selection_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let p = two_driver_panel(&mut rng, 600, 9);
        let cfg = SelectionConfig::default();
        let baseline = ModelSet::parse("D0").unwrap();
        let (m1, path1) = stepwise_select(&p, &baseline, None, &cfg).unwrap();

        let mut order: Vec<usize> = (0..p.n_assets()).collect();
        order.shuffle(&mut rng);
        let names: Vec<String> = order.iter().map(|&j| p.names()[j].clone()).collect();
        let data = DMatrix::from_fn(p.n_periods(), p.n_assets(), |r, c| p.returns()[(r, order[c])]);
        let q = ReturnPanel::new(p.periods().to_vec(), names, data).unwrap();
        let (m2, path2) = stepwise_select(&q, &baseline, None, &cfg).unwrap();

        assert_eq!(m1.names(), m2.names(), "inclusion order must be permutation-invariant");
        let f1: Vec<&String> = path1.steps.iter().map(|s| &s.factor).collect();
        let f2: Vec<&String> = path2.steps.iter().map(|s| &s.factor).collect();
        assert_eq!(f1, f2);
    }

    #[test]
    fn exact_tie_breaks_to_lexicographically_smaller_name() {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let t = 300;
        let d: Vec<f64> = (0..t).map(|_| 0.006 + rng.sample::<f64, _>(StandardNormal) * 0.03).collect();
        let extra_ret: Vec<f64> =
            (0..t).map(|r| 0.004 + 0.3 * d[r] + rng.sample::<f64, _>(StandardNormal) * 0.02).collect();
        // identical twin candidates under two names: scores are bit-equal;
        // filler noise keeps the stop test feasible after one addition
        let filler = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..t).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.03).collect()
        };
        let p = panel_from(vec![
            ("BASE".to_string(), d),
            ("Y_TWIN".to_string(), extra_ret.clone()),
            ("X_TWIN".to_string(), extra_ret),
            ("N1".to_string(), filler(&mut rng)),
            ("N2".to_string(), filler(&mut rng)),
        ]);
        let cfg = SelectionConfig {
            significance: 1.0 - 1e-12,
            max_steps: Some(1),
            ..SelectionConfig::default()
        };
        let (model, _) = fse(&p, &ModelSet::parse("BASE").unwrap(), None, &cfg).unwrap();
        assert_eq!(model.names(), &["BASE", "X_TWIN"]);
    }

    #[test]
    fn evaluate_factor_verdicts() {
        let mut rng = ChaCha8Rng::seed_from_u64(109);
        let p = two_driver_panel(&mut rng, 900, 12);
        let core = ModelSet::parse("D0").unwrap();
        let v = evaluate_factor(&p, "D1", &core, None, &SelectionConfig::default()).unwrap();
        assert!(v.selected);
        assert!(v.final_model.contains("D1"));
        assert!(matches!(
            evaluate_factor(&p, "D0", &core, None, &SelectionConfig::default()),
            Err(Error::InvalidParam { .. })
        ));
    }

    #[test]
    fn sr_criterion_picks_highest_marginal_factor_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(113);
        let t = 500;
        let d0: Vec<f64> = (0..t).map(|_| 0.004 + rng.sample::<f64, _>(StandardNormal) * 0.03).collect();
        // HIGH has the largest single-factor SR² by construction
        let high: Vec<f64> = (0..t).map(|_| 0.02 + rng.sample::<f64, _>(StandardNormal) * 0.02).collect();
        let mut low = || -> Vec<f64> {
            (0..t).map(|_| 0.002 + rng.sample::<f64, _>(StandardNormal) * 0.03).collect()
        };
        let p = panel_from(vec![
            ("BASE".to_string(), d0),
            ("HIGH".to_string(), high),
            ("LOW1".to_string(), low()),
            ("LOW2".to_string(), low()),
            ("LOW3".to_string(), low()),
        ]);
        let cfg = SelectionConfig {
            criterion: SelectionCriterion::SingleFactorSr2,
            significance: 1.0 - 1e-12,
            max_steps: Some(1),
            ..SelectionConfig::default()
        };
        let (model, _) = fse(&p, &ModelSet::parse("BASE").unwrap(), None, &cfg).unwrap();
        assert_eq!(model.names().last().unwrap(), "HIGH");
    }
}

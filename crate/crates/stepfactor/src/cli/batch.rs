//! Batch evaluation of individual factors inside a core model.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frontier::ModelSet;
use crate::panel::ReturnPanel;
use crate::stepwise::{stepwise_select_ws, SelectionConfig, SelectionWorkspace};

/// One row of the factor-evaluation table.
#[derive(Debug, Clone, Serialize)]
pub struct FactorEvalRow {
    /// 1-based position of the factor in the panel.
    pub id: usize,
    pub factor: String,
    /// Whether the factor survives its own enter/exit run; `None` for core
    /// factors, which are not separately evaluated.
    pub selected: Option<bool>,
    /// Whether that run's final model equals the reference model.
    pub same: Option<bool>,
    /// Fraction of all runs whose final model contains this factor.
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorEvalReport {
    pub rows: Vec<FactorEvalRow>,
    pub reference: ModelSet,
    /// Number of enter/exit runs (one per non-core factor).
    pub runs: usize,
}

/// Runs [`crate::stepwise::evaluate_factor`] for every non-core panel factor.
///
/// Each run starts the full forward-backward selection from `core ∪ {factor}`.
/// The `rate` column reports every factor's inclusion frequency across all
/// runs; `same` compares each run's final model with `reference` (by default
/// the selection obtained from the bare core).
pub fn factor_eval_batch(
    panel: &ReturnPanel,
    core: &ModelSet,
    extra: Option<&ReturnPanel>,
    cfg: &SelectionConfig,
    reference: Option<ModelSet>,
) -> Result<FactorEvalReport> {
    for name in core.names() {
        panel.index_of(name)?;
    }
    let candidates: Vec<String> =
        panel.names().iter().filter(|n| !core.contains(n)).cloned().collect();
    if candidates.is_empty() {
        return Err(Error::EmptySelection { context: "no non-core factors to evaluate".into() });
    }

    let ws = SelectionWorkspace::new(panel, extra, cfg)?;
    let reference = match reference {
        Some(m) => m,
        None => stepwise_select_ws(&ws, core, cfg)?.0,
    };

    let finals: Vec<Result<ModelSet>> = candidates
        .par_iter()
        .map(|factor| stepwise_select_ws(&ws, &core.with(factor), cfg).map(|(m, _)| m))
        .collect();

    let mut models = Vec::with_capacity(candidates.len());
    for outcome in finals {
        models.push(outcome?);
    }
    let runs = models.len();

    let rate_of = |name: &str| -> f64 {
        models.iter().filter(|m| m.contains(name)).count() as f64 / runs as f64
    };
    let mut rows = Vec::with_capacity(panel.n_assets());
    let mut run_iter = candidates.iter().zip(models.iter());
    let mut per_candidate = std::collections::HashMap::new();
    for (factor, model) in run_iter.by_ref() {
        per_candidate.insert(factor.clone(), (model.contains(factor), model.same_set(&reference)));
    }
    for (j, name) in panel.names().iter().enumerate() {
        let (selected, same) = match per_candidate.get(name) {
            Some(&(sel, same)) => (Some(sel), Some(same)),
            None => (None, None),
        };
        rows.push(FactorEvalRow { id: j + 1, factor: name.clone(), selected, same, rate: rate_of(name) });
    }
    Ok(FactorEvalReport { rows, reference, runs })
}

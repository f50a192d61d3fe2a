//! Command execution and report emission.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{
    parse_benchmarks, parse_model_file, resolve, CommandArgs, GlobalOpts, Resolved, TestKind,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    bootstrap_sr, investment_metrics, oos_evaluate, pricing_metrics, significance_stars,
    InvestOptions, ModelSource, OosOptions, PricingOptions,
};
use crate::frontier::ModelSet;
use crate::panel::{LoadOptions, ReturnPanel};
use crate::simlab::{BaselineCase, SimCalibration, SimConfig, SimMethod};
use crate::stepwise::{bse, fse, stepwise_select, SelectionPath};
use crate::testing::{grs_test, hda_test, HdaConfig};

#[derive(Serialize)]
struct RunManifest {
    version: &'static str,
    command: Vec<String>,
    /// Input path → SHA-256 digest of its bytes.
    inputs: BTreeMap<String, String>,
    seed: Option<u64>,
    started_unix: u64,
    elapsed_secs: f64,
    threads: usize,
    outputs: Vec<String>,
}

struct Emitter {
    out_dir: PathBuf,
    outputs: Vec<String>,
}

impl Emitter {
    fn new(out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| Error::Io { path: out_dir.display().to_string(), source: e })?;
        Ok(Emitter { out_dir: out_dir.to_path_buf(), outputs: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value).expect("serializable report");
        body.push('\n');
        self.write(name, &body)
    }
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn path_rows(path: &SelectionPath) -> Vec<Vec<String>> {
    path.steps
        .iter()
        .map(|s| {
            vec![
                s.step.to_string(),
                match s.action {
                    crate::stepwise::StepAction::Add => "add".into(),
                    crate::stepwise::StepAction::Remove => "remove".into(),
                },
                s.factor.clone(),
                format!("{}", s.grs),
                format!("{}", s.sr2),
                format!("{}", s.hda_stat),
                format!("{}", s.hda_p),
                s.stopped.to_string(),
            ]
        })
        .collect()
}

pub(super) fn execute(global: &GlobalOpts, command: &CommandArgs, echo: &[String]) -> Result<()> {
    let resolved = resolve(global)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolved.threads)
        .build()
        .map_err(|e| Error::InvalidParam { name: "threads".into(), reason: e.to_string() })?;

    let mut emitter = Emitter::new(&resolved.out_dir)?;
    let mut inputs = BTreeMap::new();
    for path in [&resolved.data, &resolved.assets, &resolved.costs].into_iter().flatten() {
        inputs.insert(path.display().to_string(), digest_file(path)?);
    }

    let seed = pool.install(|| run_command(&resolved, command, &mut emitter, &mut inputs))?;

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        command: echo.to_vec(),
        inputs,
        seed,
        started_unix: started,
        elapsed_secs: clock.elapsed().as_secs_f64(),
        threads: resolved.threads,
        outputs: emitter.outputs.clone(),
    };
    let body = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
    let path = resolved.out_dir.join("manifest.json");
    std::fs::write(&path, body)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    Ok(())
}

fn run_command(
    resolved: &Resolved,
    command: &CommandArgs,
    emitter: &mut Emitter,
    inputs: &mut BTreeMap<String, String>,
) -> Result<Option<u64>> {
    match command {
        CommandArgs::Select { baseline, selection, fse_only, bse_only } => {
            let panel = resolved.load_panel()?;
            let extra = resolved.load_assets()?;
            let baseline = ModelSet::parse(baseline)?;
            for name in baseline.names() {
                panel.index_of(name)?;
            }
            let cfg = selection.config(resolved.alpha_level);
            let (model, path) = if *fse_only {
                fse(&panel, &baseline, extra.as_ref(), &cfg)?
            } else if *bse_only {
                bse(&panel, &baseline, extra.as_ref(), &cfg)?
            } else {
                stepwise_select(&panel, &baseline, extra.as_ref(), &cfg)?
            };

            let header =
                ["step", "action", "factor", "grs", "sr2", "hda_stat", "hda_p", "stopped"];
            emitter.write("select_path.csv", &csv_table(&header, &path_rows(&path)))?;

            #[derive(Serialize)]
            struct FinalModel<'a> {
                model: &'a ModelSet,
                label: String,
                size: usize,
                converged: bool,
                steps: usize,
                skipped: &'a [crate::stepwise::SkippedCandidate],
                grs: Option<crate::testing::TestResult>,
                hda: Option<crate::testing::TestResult>,
            }
            let hda_cfg = HdaConfig {
                significance: resolved.alpha_level,
                screening_level: cfg.screening_level,
            };
            let report = FinalModel {
                label: model.label(),
                size: model.len(),
                converged: path.converged,
                steps: path.steps.len(),
                skipped: &path.skipped,
                grs: grs_test(&panel, &model, extra.as_ref()).ok(),
                hda: hda_test(&panel, &model, extra.as_ref(), &hda_cfg).ok(),
                model: &model,
            };
            emitter.write_json("select_model.json", &report)?;
            println!("selected {} ({} steps, converged: {})", model.label(), path.steps.len(), path.converged);
            Ok(None)
        }

        CommandArgs::Test { model, which } => {
            let panel = resolved.load_panel()?;
            let extra = resolved.load_assets()?;
            let model = ModelSet::parse(model)?;
            let mut results: Vec<(&str, crate::testing::TestResult)> = Vec::new();
            if matches!(which, TestKind::Grs | TestKind::Both) {
                results.push(("grs", grs_test(&panel, &model, extra.as_ref())?));
            }
            if matches!(which, TestKind::Hda | TestKind::Both) {
                let cfg = HdaConfig { significance: resolved.alpha_level, screening_level: None };
                results.push(("hda", hda_test(&panel, &model, extra.as_ref(), &cfg)?));
            }

            #[derive(Serialize)]
            struct TestRecord<'a> {
                test: &'a str,
                model: String,
                #[serde(flatten)]
                result: &'a crate::testing::TestResult,
                rejected: bool,
            }
            let records: Vec<TestRecord> = results
                .iter()
                .map(|(name, r)| TestRecord {
                    test: name,
                    model: model.label(),
                    result: r,
                    rejected: r.rejects(resolved.alpha_level),
                })
                .collect();
            emitter.write_json("test_results.json", &records)?;
            let rows: Vec<Vec<String>> = results
                .iter()
                .map(|(name, r)| {
                    vec![
                        name.to_string(),
                        format!("{:.6}", r.statistic),
                        format!("{:.6}", r.p_value),
                        r.df.to_string(),
                        r.n_lhs.to_string(),
                    ]
                })
                .collect();
            emitter.write(
                "test_results.csv",
                &csv_table(&["test", "statistic", "p_value", "df", "n_lhs"], &rows),
            )?;
            for (name, r) in &results {
                println!(
                    "{name}: statistic {:.4}, p {:.4}, {} LHS assets{}",
                    r.statistic,
                    r.p_value,
                    r.n_lhs,
                    if r.rejects(resolved.alpha_level) { " (rejected)" } else { "" }
                );
            }
            Ok(None)
        }

        CommandArgs::Metrics { model, targets, benchmarks, cs_intercept } => {
            let panel = resolved.load_panel()?;
            let model = ModelSet::parse(model)?;
            let (eval_panel, target_names) = if targets == "unselected" {
                let names: Vec<String> =
                    panel.names().iter().filter(|n| !model.contains(n)).cloned().collect();
                (panel.clone(), names)
            } else {
                let target_path = PathBuf::from(targets);
                inputs.insert(target_path.display().to_string(), digest_file(&target_path)?);
                let extra = ReturnPanel::load(
                    &target_path,
                    &LoadOptions { delimiter: resolved.delimiter, period_column: 0 },
                )?;
                let extra = if resolved.from.is_some() || resolved.to.is_some() {
                    extra.subset(None, Some((resolved.from.as_deref(), resolved.to.as_deref())))?
                } else {
                    extra
                };
                let names = extra.names().to_vec();
                (panel.hstack(&extra)?, names)
            };
            let popts =
                PricingOptions { market: resolved.market.clone(), cs_intercept: *cs_intercept };
            let pricing = pricing_metrics(&eval_panel, &model, &target_names, &popts)?;
            let benches = parse_benchmarks(benchmarks.as_deref())?;
            let iopts = InvestOptions {
                annualization: resolved.annualization,
                vol_target: resolved.vol_target,
            };
            let invest = investment_metrics(&panel, &model, &benches, &iopts)?;

            #[derive(Serialize)]
            struct MetricsReport<'a> {
                model: String,
                size: usize,
                n_targets: usize,
                pricing: &'a crate::evaluation::PricingMetrics,
                invest: &'a crate::evaluation::InvestMetrics,
            }
            emitter.write_json(
                "metrics.json",
                &MetricsReport {
                    model: model.label(),
                    size: model.len(),
                    n_targets: target_names.len(),
                    pricing: &pricing,
                    invest: &invest,
                },
            )?;
            let mut header: Vec<String> = [
                "model", "size", "avg_abs_alpha", "avg_abs_t", "n_sign2", "total_r2", "cs_r2",
                "avg_return", "ann_sharpe",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            let mut row = vec![
                model.label(),
                model.len().to_string(),
                format!("{:.4}", pricing.avg_abs_alpha),
                format!("{:.4}", pricing.avg_abs_t),
                pricing.n_sign2.to_string(),
                format!("{:.4}", pricing.total_r2),
                format!("{:.4}", pricing.cs_r2),
                format!("{:.4}", invest.avg_return),
                format!("{:.4}", invest.ann_sharpe),
            ];
            for (label, (alpha, t)) in &invest.benchmark_alphas {
                header.push(format!("alpha[{label}]"));
                row.push(format!("{:.4}{}", alpha, significance_stars(*t)));
            }
            let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            emitter.write("metrics.csv", &csv_table(&header_refs, &[row]))?;
            println!(
                "{}: A|alpha| {:.2}, A|t| {:.2}, #sign2 {}, Total R2 {:.1}, CS R2 {:.1}, Ann.SR {:.2}",
                model.label(),
                pricing.avg_abs_alpha,
                pricing.avg_abs_t,
                pricing.n_sign2,
                pricing.total_r2,
                pricing.cs_r2,
                invest.ann_sharpe
            );
            Ok(None)
        }

        CommandArgs::Oos { folds, model, reselect, baseline, selection, benchmarks } => {
            let panel = resolved.load_panel()?;
            let extra = resolved.load_assets()?;
            let fold_split = panel.split_folds(*folds)?;
            let source = if *reselect {
                let baseline = baseline.as_ref().ok_or_else(|| Error::InvalidParam {
                    name: "baseline".into(),
                    reason: "--reselect needs --baseline".into(),
                })?;
                ModelSource::Reselect {
                    baseline: ModelSet::parse(baseline)?,
                    cfg: selection.config(resolved.alpha_level),
                }
            } else {
                ModelSource::Fixed(ModelSet::parse(model.as_ref().ok_or_else(|| {
                    Error::InvalidParam {
                        name: "model".into(),
                        reason: "provide --model or --reselect with --baseline".into(),
                    }
                })?)?)
            };
            let opts = OosOptions {
                pricing: PricingOptions { market: resolved.market.clone(), cs_intercept: false },
                invest: InvestOptions {
                    annualization: resolved.annualization,
                    vol_target: resolved.vol_target,
                },
                benchmarks: parse_benchmarks(benchmarks.as_deref())?,
            };
            let outcomes = oos_evaluate(&panel, extra.as_ref(), &fold_split, &source, &opts)?;
            emitter.write_json("oos.json", &outcomes)?;

            let header = [
                "fold", "sample", "model", "total_r2", "cs_r2", "avg_abs_alpha", "avg_abs_t",
                "n_sign2", "avg_return", "ann_sharpe", "extra_total_r2", "extra_cs_r2",
            ];
            let mut rows = Vec::new();
            for o in &outcomes {
                for (tag, eval) in [("ins", &o.ins), ("oos", &o.oos)] {
                    let (xt, xc) = match &eval.pricing_extra {
                        Some(p) => (format!("{:.4}", p.total_r2), format!("{:.4}", p.cs_r2)),
                        None => (String::new(), String::new()),
                    };
                    rows.push(vec![
                        o.fold.to_string(),
                        tag.to_string(),
                        o.model.label(),
                        format!("{:.4}", eval.pricing.total_r2),
                        format!("{:.4}", eval.pricing.cs_r2),
                        format!("{:.4}", eval.pricing.avg_abs_alpha),
                        format!("{:.4}", eval.pricing.avg_abs_t),
                        eval.pricing.n_sign2.to_string(),
                        format!("{:.4}", eval.invest.avg_return),
                        format!("{:.4}", eval.invest.ann_sharpe),
                        xt,
                        xc,
                    ]);
                }
            }
            emitter.write("oos.csv", &csv_table(&header, &rows))?;
            for o in &outcomes {
                println!(
                    "fold {}: INS Ann.SR {:.2} / OOS Ann.SR {:.2} ({})",
                    o.fold,
                    o.ins.invest.ann_sharpe,
                    o.oos.invest.ann_sharpe,
                    o.model.label()
                );
            }
            Ok(None)
        }

        CommandArgs::Bootstrap { models, runs } => {
            let panel = resolved.load_panel()?;
            inputs.insert(models.display().to_string(), digest_file(models)?);
            let labeled = parse_model_file(models)?;
            for (_, m) in &labeled {
                for name in m.names() {
                    panel.index_of(name)?;
                }
            }
            let seed = resolved.seed.unwrap_or_else(rand::random);
            let sets: Vec<ModelSet> = labeled.iter().map(|(_, m)| m.clone()).collect();
            let mut report = bootstrap_sr(&panel, &sets, *runs, seed)?;
            report.models = labeled.iter().map(|(l, _)| l.clone()).collect();
            emitter.write_json("bootstrap.json", &report)?;

            let beat_table = |mean: &[f64], beat: &[Vec<f64>], best: &[f64]| -> String {
                let mut header: Vec<String> = vec!["model".into(), "m_sr2".into()];
                header.extend(report.models.iter().cloned());
                header.push("best".into());
                let rows: Vec<Vec<String>> = report
                    .models
                    .iter()
                    .enumerate()
                    .map(|(i, label)| {
                        let mut row = vec![label.clone(), format!("{:.4}", mean[i])];
                        for j in 0..report.models.len() {
                            row.push(if i == j {
                                String::new()
                            } else {
                                format!("{:.1}", beat[i][j])
                            });
                        }
                        row.push(format!("{:.1}", best[i]));
                        row
                    })
                    .collect();
                let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
                csv_table(&header_refs, &rows)
            };
            emitter.write(
                "bootstrap_ins.csv",
                &beat_table(&report.mean_ins_sr2, &report.beat_ins, &report.best_ins),
            )?;
            emitter.write(
                "bootstrap_oos.csv",
                &beat_table(&report.mean_oos_sr2, &report.beat_oos, &report.best_oos),
            )?;
            println!(
                "bootstrap over {} runs (seed {}), {} redraws",
                report.runs, report.seed, report.redrawn
            );
            Ok(Some(seed))
        }

        CommandArgs::Simulate { calibration, reps, methods, case, k1, k2, t_obs } => {
            let cal = match calibration {
                Some(path) => {
                    inputs.insert(path.display().to_string(), digest_file(path)?);
                    SimCalibration::load(path)?
                }
                None if (*k1, *k2) == (5, 100) => SimCalibration::default_5_100(),
                None => SimCalibration::generate(*k1, *k2, crate::simlab::DEFAULT_CALIBRATION_SEED)?,
            };
            let baseline_case = match case {
                1 => BaselineCase::One,
                2 => BaselineCase::Two,
                other => {
                    return Err(Error::InvalidParam {
                        name: "case".into(),
                        reason: format!("expected 1 or 2, got {other}"),
                    })
                }
            };
            let specs: Vec<(String, crate::stepwise::SelectionConfig)> = methods
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| SimMethod::parse(s.trim()).map(|m| m.spec(resolved.alpha_level)))
                .collect::<Result<Vec<_>>>()?;
            let seed = resolved.seed.unwrap_or_else(rand::random);
            let cfg = SimConfig { calibration: cal, t_obs: *t_obs, baseline_case, seed };
            let report = crate::simlab::run_sim_study(&cfg, &specs, *reps)?;

            emitter.write_json("simulation.json", &report)?;
            let rows: Vec<Vec<String>> = report
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.method.clone(),
                        format!("{:.2}", r.mean_size),
                        format!("{:.2}", r.cp),
                        format!("{:.2}", r.cf),
                        format!("{:.2}", r.tr),
                        format!("{:.2}", r.fr),
                    ]
                })
                .collect();
            emitter.write(
                "simulation.csv",
                &csv_table(&["method", "mean_size", "cp", "cf", "tr", "fr"], &rows),
            )?;
            println!(
                "simulated {} replications (seed {}, {} failures)",
                report.replications, seed, report.failures
            );
            Ok(Some(seed))
        }

        CommandArgs::FactorEval { core, reference, selection } => {
            let panel = resolved.load_panel()?;
            let extra = resolved.load_assets()?;
            let core = ModelSet::parse(core)?;
            let reference = reference.as_deref().map(ModelSet::parse).transpose()?;
            let cfg = selection.config(resolved.alpha_level);
            let report =
                super::factor_eval_batch(&panel, &core, extra.as_ref(), &cfg, reference)?;
            emitter.write_json("factor_eval.json", &report)?;
            let rows: Vec<Vec<String>> = report
                .rows
                .iter()
                .map(|r| {
                    let flag = |v: Option<bool>| match v {
                        Some(true) => "yes".to_string(),
                        Some(false) => "no".to_string(),
                        None => "-".to_string(),
                    };
                    vec![
                        r.id.to_string(),
                        r.factor.clone(),
                        flag(r.selected),
                        flag(r.same),
                        format!("{:.2}", r.rate),
                    ]
                })
                .collect();
            emitter.write(
                "factor_eval.csv",
                &csv_table(&["id", "factor", "selected", "same", "rate"], &rows),
            )?;
            println!(
                "evaluated {} factors against core {} (reference {})",
                report.runs,
                core.label(),
                report.reference.label()
            );
            Ok(None)
        }
    }
}

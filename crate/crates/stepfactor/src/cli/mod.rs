//! Command-line orchestration: argument parsing, configuration merging,
//! artifact emission, and run manifests.
//!
//! Every command writes its reports (CSV plus JSON) into the output directory
//! together with a `manifest.json` that records the toolkit version, the
//! command line, SHA-256 digests of every input file, the resolved seed, and
//! the produced artifacts — enough to re-run the command identically.
//!
//! Exit codes are a stable scripting contract: 0 success, 2 usage or
//! configuration error, 3 data error, 4 numerical failure. On failure a
//! machine-readable error record is printed to stderr (and written to
//! `error.json` when the output directory is available).

mod batch;
mod run;

pub use batch::{factor_eval_batch, FactorEvalReport, FactorEvalRow};

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frontier::ModelSet;
use crate::panel::{CostSchedule, LoadOptions, ReturnPanel};
use crate::stepwise::{SelectionConfig, SelectionCriterion, StopRule};

#[derive(Parser, Debug)]
#[command(
    name = "stepfactor",
    version,
    about = "Stepwise factor-model selection and asset pricing tests",
    propagate_version = true
)]
struct CliArgs {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Args, Debug, Clone)]
struct GlobalOpts {
    /// Factor-return panel CSV (period label column + one column per factor).
    #[arg(long, global = true, env = "STEPFACTOR_DATA")]
    data: Option<PathBuf>,
    /// Optional extra test-asset panel CSV covering the same periods.
    #[arg(long, global = true, env = "STEPFACTOR_ASSETS")]
    assets: Option<PathBuf>,
    /// Optional two-column `name,bps` cost schedule applied to the factor panel.
    #[arg(long, global = true, env = "STEPFACTOR_COSTS")]
    costs: Option<PathBuf>,
    /// First period label to keep (inclusive).
    #[arg(long, global = true, env = "STEPFACTOR_FROM")]
    from: Option<String>,
    /// Last period label to keep (inclusive).
    #[arg(long, global = true, env = "STEPFACTOR_TO")]
    to: Option<String>,
    /// Significance level λ of the asset pricing tests [default: 0.05].
    #[arg(long, global = true, env = "STEPFACTOR_ALPHA_LEVEL")]
    alpha_level: Option<f64>,
    /// Periods per year for annualization [default: 12].
    #[arg(long, global = true, env = "STEPFACTOR_ANNUALIZATION")]
    annualization: Option<f64>,
    /// Ex-ante per-period volatility of reported tangency portfolios [default: 0.045].
    #[arg(long, global = true, env = "STEPFACTOR_VOL_TARGET")]
    vol_target: Option<f64>,
    /// Name of the market factor for CAPM benchmark terms [default: MKT].
    #[arg(long, global = true, env = "STEPFACTOR_MARKET")]
    market: Option<String>,
    /// Worker threads (0 = all cores) [default: 0].
    #[arg(long, global = true, env = "STEPFACTOR_THREADS")]
    threads: Option<usize>,
    /// Directory for reports and the run manifest [default: stepfactor_out].
    #[arg(long, global = true, env = "STEPFACTOR_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// RNG seed; drawn at random and recorded in the manifest when absent.
    #[arg(long, global = true, env = "STEPFACTOR_SEED")]
    seed: Option<u64>,
    /// Key-value config file (`key = value` lines) merged under CLI flags.
    #[arg(long, global = true, env = "STEPFACTOR_CONFIG")]
    config: Option<PathBuf>,
    /// Field delimiter of the input CSVs [default: ,].
    #[arg(long, global = true, env = "STEPFACTOR_DELIMITER")]
    delimiter: Option<char>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum StopArg {
    Hda,
    Grs,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum CriterionArg {
    #[value(name = "model-sr2")]
    ModelSr2,
    #[value(name = "single-sr2")]
    SingleSr2,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum TestKind {
    Grs,
    Hda,
    Both,
}

#[derive(Args, Debug, Clone)]
struct SelectionFlags {
    /// Stop-rule test gating each step.
    #[arg(long, value_enum, default_value = "hda", env = "STEPFACTOR_STOP")]
    stop: StopArg,
    /// Candidate ranking criterion.
    #[arg(long, value_enum, default_value = "model-sr2", env = "STEPFACTOR_CRITERION")]
    criterion: CriterionArg,
    /// Cap on steps per direction [default: min(N − 2, T / 3)].
    #[arg(long)]
    max_steps: Option<usize>,
    /// Per-pair level of the HDA residual-correlation screen.
    #[arg(long)]
    screening_level: Option<f64>,
    /// Exclude extra test assets from the stop-rule test's universe.
    #[arg(long)]
    exclude_assets_from_stop: bool,
}

impl SelectionFlags {
    fn config(&self, alpha: f64) -> SelectionConfig {
        SelectionConfig {
            significance: alpha,
            stop_rule: match self.stop {
                StopArg::Hda => StopRule::Hda,
                StopArg::Grs => StopRule::Grs,
            },
            criterion: match self.criterion {
                CriterionArg::ModelSr2 => SelectionCriterion::ModelSr2,
                CriterionArg::SingleSr2 => SelectionCriterion::SingleFactorSr2,
            },
            max_steps: self.max_steps,
            screening_level: self.screening_level,
            stop_with_extra_assets: !self.exclude_assets_from_stop,
            ..SelectionConfig::default()
        }
    }
}

#[derive(Subcommand, Debug, Clone)]
enum CommandArgs {
    /// Expand and prune a baseline model by stepwise evaluation.
    Select {
        /// Comma-separated baseline factor names.
        #[arg(long, env = "STEPFACTOR_BASELINE")]
        baseline: String,
        #[command(flatten)]
        selection: SelectionFlags,
        /// Run only the forward expansion.
        #[arg(long, conflicts_with = "bse_only")]
        fse_only: bool,
        /// Run only the backward pruning.
        #[arg(long)]
        bse_only: bool,
    },
    /// Run the GRS and/or HDA test for one model.
    Test {
        /// Comma-separated model factor names.
        #[arg(long)]
        model: String,
        /// Which test(s) to run.
        #[arg(long = "test", value_enum, default_value = "both")]
        which: TestKind,
    },
    /// Pricing and investment metrics for one model.
    Metrics {
        #[arg(long)]
        model: String,
        /// `unselected` (default) or a CSV of target assets.
        #[arg(long, default_value = "unselected")]
        targets: String,
        /// Benchmark models, semicolon-separated lists: "MKT;MKT,SMB,HML".
        #[arg(long)]
        benchmarks: Option<String>,
        /// Add an intercept to the cross-sectional premium regression.
        #[arg(long)]
        cs_intercept: bool,
    },
    /// K-fold in-sample / out-of-sample evaluation.
    Oos {
        /// Number of consecutive folds.
        #[arg(long, default_value_t = 3)]
        folds: usize,
        /// Fixed model to evaluate (comma-separated names).
        #[arg(long, required_unless_present = "reselect")]
        model: Option<String>,
        /// Re-run stepwise selection on each training sample.
        #[arg(long, requires = "baseline")]
        reselect: bool,
        /// Baseline for per-fold reselection.
        #[arg(long)]
        baseline: Option<String>,
        #[command(flatten)]
        selection: SelectionFlags,
        /// Benchmark models for investment alphas.
        #[arg(long)]
        benchmarks: Option<String>,
    },
    /// Paired-month bootstrap comparison of models.
    Bootstrap {
        /// File with one model per line: `LABEL=F1,F2,...` (or a bare list).
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
    },
    /// Monte Carlo selection-accuracy study on simulated panels.
    Simulate {
        /// JSON calibration file {mu1, sigma1, beta, sigma2}; omitted = built-in default.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        /// Comma-separated methods among hda, grs, sr.
        #[arg(long, default_value = "hda,grs,sr")]
        methods: String,
        /// Baseline case: 1 = first risk factor, 2 = plus a redundant factor.
        #[arg(long, default_value_t = 1)]
        case: u8,
        /// Risk factors (used with the generated default calibration).
        #[arg(long, default_value_t = 5)]
        k1: usize,
        /// Unselected factors (used with the generated default calibration).
        #[arg(long, default_value_t = 100)]
        k2: usize,
        /// Periods per replication.
        #[arg(long, default_value_t = 600)]
        t_obs: usize,
    },
    /// Evaluate every non-core factor inside a core model.
    FactorEval {
        /// Comma-separated core factor names.
        #[arg(long)]
        core: String,
        /// Reference model for the `Same` column; defaults to the selection
        /// from the bare core.
        #[arg(long)]
        reference: Option<String>,
        #[command(flatten)]
        selection: SelectionFlags,
    },
}

/// Fully resolved global settings (CLI > env > config file > defaults).
#[derive(Debug, Clone)]
pub(crate) struct Resolved {
    pub data: Option<PathBuf>,
    pub assets: Option<PathBuf>,
    pub costs: Option<PathBuf>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub alpha_level: f64,
    pub annualization: f64,
    pub vol_target: f64,
    pub market: String,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub delimiter: u8,
}

fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let mut map = BTreeMap::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::InvalidParam {
            name: format!("config line {}", lineno + 1),
            reason: "expected `key = value`".into(),
        })?;
        let key = key.trim().to_lowercase().replace('-', "_");
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn resolve(global: &GlobalOpts) -> Result<Resolved> {
    let cfg = match &global.config {
        Some(path) => parse_config_file(path)?,
        None => BTreeMap::new(),
    };
    let known = [
        "data", "assets", "costs", "from", "to", "alpha_level", "annualization", "vol_target",
        "market", "threads", "out_dir", "seed", "delimiter",
    ];
    for key in cfg.keys() {
        if !known.contains(&key.as_str()) {
            return Err(Error::InvalidParam {
                name: format!("config key `{key}`"),
                reason: format!("unknown key; expected one of {}", known.join(", ")),
            });
        }
    }
    let parsed = |key: &str| -> Option<&String> { cfg.get(key) };
    let num = |key: &str| -> Result<Option<f64>> {
        parsed(key)
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::InvalidParam {
                    name: key.into(),
                    reason: format!("`{v}` is not a number"),
                })
            })
            .transpose()
    };

    let alpha_level = global.alpha_level.or(num("alpha_level")?).unwrap_or(0.05);
    if !(alpha_level > 0.0 && alpha_level < 1.0) {
        return Err(Error::InvalidParam {
            name: "alpha_level".into(),
            reason: "must lie strictly between 0 and 1".into(),
        });
    }
    let delimiter_char = global
        .delimiter
        .or_else(|| parsed("delimiter").and_then(|s| s.chars().next()))
        .unwrap_or(',');
    if !delimiter_char.is_ascii() {
        return Err(Error::InvalidParam {
            name: "delimiter".into(),
            reason: "must be a single ASCII character".into(),
        });
    }
    Ok(Resolved {
        data: global.data.clone().or_else(|| parsed("data").map(PathBuf::from)),
        assets: global.assets.clone().or_else(|| parsed("assets").map(PathBuf::from)),
        costs: global.costs.clone().or_else(|| parsed("costs").map(PathBuf::from)),
        from: global.from.clone().or_else(|| parsed("from").cloned()),
        to: global.to.clone().or_else(|| parsed("to").cloned()),
        alpha_level,
        annualization: global.annualization.or(num("annualization")?).unwrap_or(12.0),
        vol_target: global.vol_target.or(num("vol_target")?).unwrap_or(crate::frontier::DEFAULT_VOL_TARGET),
        market: global.market.clone().or_else(|| parsed("market").cloned()).unwrap_or_else(|| "MKT".into()),
        threads: global.threads.or(num("threads")?.map(|v| v as usize)).unwrap_or(0),
        out_dir: global
            .out_dir
            .clone()
            .or_else(|| parsed("out_dir").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("stepfactor_out")),
        seed: global.seed.or(num("seed")?.map(|v| v as u64)),
        delimiter: delimiter_char as u8,
    })
}

impl Resolved {
    /// Loads the factor panel with costs and period-range filters applied.
    pub(crate) fn load_panel(&self) -> Result<ReturnPanel> {
        let path = self.data.as_ref().ok_or_else(|| Error::InvalidParam {
            name: "data".into(),
            reason: "this command needs --data <panel.csv>".into(),
        })?;
        let mut panel =
            ReturnPanel::load(path, &LoadOptions { delimiter: self.delimiter, period_column: 0 })?;
        if let Some(cost_path) = &self.costs {
            let schedule = CostSchedule::load(cost_path)?;
            panel = panel.adjust_costs(&schedule)?;
        }
        if self.from.is_some() || self.to.is_some() {
            panel = panel.subset(None, Some((self.from.as_deref(), self.to.as_deref())))?;
        }
        Ok(panel)
    }

    /// Loads the optional extra test-asset panel over the same period range.
    pub(crate) fn load_assets(&self) -> Result<Option<ReturnPanel>> {
        match &self.assets {
            None => Ok(None),
            Some(path) => {
                let mut panel = ReturnPanel::load(
                    path,
                    &LoadOptions { delimiter: self.delimiter, period_column: 0 },
                )?;
                if self.from.is_some() || self.to.is_some() {
                    panel = panel.subset(None, Some((self.from.as_deref(), self.to.as_deref())))?;
                }
                Ok(Some(panel))
            }
        }
    }
}

/// Parses a benchmark spec like `"MKT;MKT,SMB,HML"`.
fn parse_benchmarks(spec: Option<&str>) -> Result<Vec<ModelSet>> {
    match spec {
        None => Ok(Vec::new()),
        Some(raw) => raw
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(ModelSet::parse)
            .collect(),
    }
}

/// Parses a bootstrap model-spec file: one model per line, `LABEL=F1,F2` or a
/// bare comma-separated list (label defaults to the joined names).
fn parse_model_file(path: &Path) -> Result<Vec<(String, ModelSet)>> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let mut models = Vec::new();
    for line in raw.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (label, list) = match line.split_once('=') {
            Some((l, r)) => (l.trim().to_string(), r),
            None => (String::new(), line),
        };
        let set = ModelSet::parse(list)?;
        let label = if label.is_empty() { set.label() } else { label };
        models.push((label, set));
    }
    if models.is_empty() {
        return Err(Error::EmptySelection { context: format!("no models in {}", path.display()) });
    }
    Ok(models)
}

/// Machine-readable failure record.
#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

/// Parses `argv`, runs the command, writes artifacts and a manifest, and
/// returns the process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();

    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match CliArgs::try_parse_from(argv.iter()) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with zero exit
            if e.use_stderr() {
                let record = ErrorRecord {
                    error: "usage",
                    message: e.render().to_string(),
                    exit_code: 2,
                };
                eprintln!("{}", serde_json::to_string(&record).expect("serializable"));
                return 2;
            }
            print!("{e}");
            return 0;
        }
    };

    let echo: Vec<String> = argv.iter().skip(1).map(|s| s.to_string_lossy().into_owned()).collect();
    match run::execute(&cli.global, &cli.command, &echo) {
        Ok(()) => 0,
        Err(e) => {
            let record = ErrorRecord { error: e.kind(), message: e.to_string(), exit_code: e.exit_code() };
            let json = serde_json::to_string(&record).expect("serializable");
            eprintln!("{json}");
            if let Ok(resolved) = resolve(&cli.global) {
                if std::fs::create_dir_all(&resolved.out_dir).is_ok() {
                    let _ = std::fs::write(resolved.out_dir.join("error.json"), &json);
                }
            }
            e.exit_code()
        }
    }
}

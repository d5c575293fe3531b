//! Batch command-line interface: `simulate`, `fit`, `predict`, `evaluate`
//! and `pdp`.
//!
//! Every option can also come from a `key=value` config file given with
//! `--config`, using the long flag name as key. Flags win over the file and
//! the file wins over built-in defaults. Validation failures exit with code
//! 2, numerical failures with code 3.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use crate::distributions::{gmm_quantile_function, EmpiricalDistribution, LevelGrid, QuantileFunction};
use crate::error::{Result, WdlError};
use crate::eval::{functional_pdp, ice_curves, marginal_param_curve, prediction_loss};
use crate::mm::PiUpdate;
use crate::scgmm::{predict_params, train, DistributionalDataset, ScgmmConfig, ScgmmModel};
use crate::sim::{densify, simulate, LinearParams, Scenario, SimConfig};
use crate::trees::TreeParams;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "wdl",
    version,
    about = "Distributional regression under the 2-Wasserstein loss"
)]
pub struct Cli {
    /// Suppress progress messages.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// `key=value` file supplying defaults for any long option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Train a conditional mixture model.
    Fit(FitArgs),
    /// Predict quantile functions (and optionally mixture parameters).
    Predict(PredictArgs),
    /// Score predicted quantile functions against observed ones.
    Evaluate(EvaluateArgs),
    /// Partial-dependence, parameter and ICE curves.
    Pdp(PdpArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `mixture` (alias `eq7`) or `linear` (alias `c6`).
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Draws per outcome.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Quantile levels: a count `m` for `{1/(m+1), ..}` or a comma list.
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long)]
    pub out_x: Option<PathBuf>,
    #[arg(long)]
    pub out_q: Option<PathBuf>,
    /// Also write the raw draws as `sample_id,value`.
    #[arg(long)]
    pub out_points: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Observed quantile functions, one row per sample.
    #[arg(long)]
    pub q: Option<PathBuf>,
    /// Observed raw draws as `sample_id,value` (alternative to `--q`).
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub valid_frac: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub min_split_improvement: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `em` or `gradient`.
    #[arg(long)]
    pub pi_update: Option<String>,
    /// Start every ensemble at zero.
    #[arg(long)]
    pub strict_zero_init: bool,
    /// Interpolate the input quantiles onto `--levels` before fitting.
    #[arg(long)]
    pub densify: bool,
    /// Model grid (count or comma list); defaults to the input grid, or 99
    /// levels for raw points and densified input.
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    /// Defaults to the model path with `.trace.txt` appended.
    #[arg(long)]
    pub out_trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Output levels (count or comma list); defaults to the model grid.
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long)]
    pub out_q: Option<PathBuf>,
    /// Per-row `pi_k, mu_k, sigma_k` columns.
    #[arg(long)]
    pub out_params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub observed: Option<PathBuf>,
    #[arg(long)]
    pub predicted: Option<PathBuf>,
    /// Per-row losses as `row,w2`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON with the mean loss and R-squared.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PdpArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Column name (`x3`) or 1-based column number.
    #[arg(long)]
    pub feature: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    /// Comma list of feature values; overrides `--grid-points`.
    #[arg(long, allow_hyphen_values = true)]
    pub values: Option<String>,
    /// Evenly spaced values between the feature's observed min and max.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// `quantile`, `params` or `ice`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                WdlError::Numerical { .. } => EXIT_NUMERICAL,
                _ => EXIT_INVALID,
            }
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let say = |msg: String| {
        if !cli.quiet {
            println!("{msg}");
        }
    };
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &file, &say),
        Command::Fit(a) => cmd_fit(a, &file, &say),
        Command::Predict(a) => cmd_predict(a, &file, &say),
        Command::Evaluate(a) => cmd_evaluate(a, &file, &say),
        Command::Pdp(a) => cmd_pdp(a, &file, &say),
    }
}

/// `key=value` lines; `#` starts a comment.
#[derive(Debug, Default)]
pub struct ConfigFile {
    path: String,
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| WdlError::invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| WdlError::invalid(format!("{origin}:{}: expected key=value", n + 1)))?;
            let key = k.trim().trim_start_matches("--").replace('_', "-");
            values.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile {
            path: origin.to_string(),
            values,
        })
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(WdlError::invalid(format!(
                "{}: unknown key `{k}` for this command",
                self.path
            ))),
            None => Ok(()),
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| WdlError::invalid(format!("{}: `{key}`: {e}", self.path)))
            })
            .transpose()
    }
}

fn pick<T: FromStr + Clone>(flag: &Option<T>, file: &ConfigFile, key: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    match flag {
        Some(v) => Ok(Some(v.clone())),
        None => file.get(key),
    }
}

fn pick_or<T: FromStr + Clone>(flag: &Option<T>, file: &ConfigFile, key: &str, default: T) -> Result<T>
where
    T::Err: Display,
{
    Ok(pick(flag, file, key)?.unwrap_or(default))
}

fn required<T: FromStr + Clone>(flag: &Option<T>, file: &ConfigFile, key: &str) -> Result<T>
where
    T::Err: Display,
{
    pick(flag, file, key)?.ok_or_else(|| WdlError::invalid(format!("missing required option --{key}")))
}

fn pick_bool(flag: bool, file: &ConfigFile, key: &str) -> Result<bool> {
    Ok(flag || file.get::<bool>(key)?.unwrap_or(false))
}

/// `m` for the uniform `m`-level grid, or an explicit comma list.
pub fn parse_levels(spec: &str) -> Result<LevelGrid> {
    let spec = spec.trim();
    if !spec.contains(',') {
        if let Ok(m) = spec.parse::<usize>() {
            if m == 0 {
                return Err(WdlError::invalid("--levels count must be positive"));
            }
            return Ok(LevelGrid::uniform(m));
        }
    }
    let levels = parse_list(spec, "--levels")?;
    LevelGrid::new(levels)
}

fn parse_list(spec: &str, what: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| WdlError::invalid(format!("{what}: `{}`: {e}", t.trim())))
        })
        .collect()
}

fn parse_scenario(s: &str) -> Result<Scenario> {
    match s.to_ascii_lowercase().as_str() {
        "mixture" | "eq7" => Ok(Scenario::Mixture),
        "linear" | "c6" => Ok(Scenario::Linear),
        other => Err(WdlError::invalid(format!("--scenario: unknown scenario `{other}`"))),
    }
}

fn parse_pi_update(s: &str) -> Result<PiUpdate> {
    match s.to_ascii_lowercase().as_str() {
        "em" | "em_approx" => Ok(PiUpdate::EmApprox),
        "gradient" | "projected_gradient" => Ok(PiUpdate::ProjectedGradient),
        other => Err(WdlError::invalid(format!("--pi-update: unknown rule `{other}`"))),
    }
}

fn flag_error(flag: &str, e: WdlError) -> WdlError {
    match e {
        WdlError::InvalidInput(m) => WdlError::InvalidInput(format!("{flag}: {m}")),
        other => other,
    }
}

fn cmd_simulate(a: &SimulateArgs, file: &ConfigFile, say: &dyn Fn(String)) -> Result<()> {
    file.check_keys(&[
        "scenario",
        "n-samples",
        "points",
        "omega",
        "seed",
        "levels",
        "out-x",
        "out-q",
        "out-points",
    ])?;
    let scenario = parse_scenario(&pick_or(&a.scenario, file, "scenario", "mixture".to_string())?)?;
    let grid = match pick(&a.levels, file, "levels")? {
        Some(s) => parse_levels(&s)?,
        None => LevelGrid::default(),
    };
    let cfg = SimConfig {
        n_samples: pick_or(&a.n_samples, file, "n-samples", 200)?,
        n_points: pick_or(&a.points, file, "points", 300)?,
        omega: pick_or(&a.omega, file, "omega", 0.1)?,
        seed: pick_or(&a.seed, file, "seed", 0)?,
        scenario,
        linear: LinearParams::default(),
        grid: grid.clone(),
    };
    cfg.validate().map_err(|e| flag_error("simulate", e))?;
    let out_x: PathBuf = required(&a.out_x, file, "out-x")?;
    let out_q: PathBuf = required(&a.out_q, file, "out-q")?;
    let out_points: Option<PathBuf> = pick(&a.out_points, file, "out-points")?;
    let data = simulate(&cfg)?;
    write_covariates(&out_x, data.x())?;
    write_quantiles(&out_q, &grid, &data.quantiles(&grid))?;
    if let Some(p) = out_points {
        write_points(&p, data.outcomes())?;
    }
    say(format!(
        "wrote {} rows to {} and {}",
        data.n(),
        out_x.display(),
        out_q.display()
    ));
    Ok(())
}

fn cmd_fit(a: &FitArgs, file: &ConfigFile, say: &dyn Fn(String)) -> Result<()> {
    file.check_keys(&[
        "x",
        "q",
        "points",
        "k",
        "eta",
        "max-iters",
        "patience",
        "valid-frac",
        "max-depth",
        "min-leaf",
        "min-split-improvement",
        "seed",
        "pi-update",
        "strict-zero-init",
        "densify",
        "levels",
        "out-model",
        "out-trace",
    ])?;
    let d = ScgmmConfig::default();
    let td = TreeParams::default();
    let pi_update = match pick(&a.pi_update, file, "pi-update")? {
        Some(s) => parse_pi_update(&s)?,
        None => d.pi_update,
    };
    let mut cfg = ScgmmConfig {
        k: pick_or(&a.k, file, "k", d.k)?,
        learning_rate: pick_or(&a.eta, file, "eta", d.learning_rate)?,
        max_boost_iters: pick_or(&a.max_iters, file, "max-iters", d.max_boost_iters)?,
        early_stop_patience: pick_or(&a.patience, file, "patience", d.early_stop_patience)?,
        validation_fraction: pick_or(&a.valid_frac, file, "valid-frac", d.validation_fraction)?,
        tree: TreeParams {
            max_depth: pick_or(&a.max_depth, file, "max-depth", td.max_depth)?,
            min_samples_leaf: pick_or(&a.min_leaf, file, "min-leaf", td.min_samples_leaf)?,
            min_split_improvement: pick_or(
                &a.min_split_improvement,
                file,
                "min-split-improvement",
                td.min_split_improvement,
            )?,
        },
        grid: LevelGrid::default(),
        seed: pick_or(&a.seed, file, "seed", d.seed)?,
        pi_update,
        strict_zero_init: pick_bool(a.strict_zero_init, file, "strict-zero-init")?,
    };
    cfg.validate().map_err(|e| flag_error("fit", e))?;
    let levels: Option<LevelGrid> = pick(&a.levels, file, "levels")?
        .map(|s: String| parse_levels(&s))
        .transpose()?;
    let want_densify = pick_bool(a.densify, file, "densify")?;
    let x_path: PathBuf = required(&a.x, file, "x")?;
    let q_path: Option<PathBuf> = pick(&a.q, file, "q")?;
    let p_path: Option<PathBuf> = pick(&a.points, file, "points")?;
    let out_model: PathBuf = required(&a.out_model, file, "out-model")?;
    let out_trace: PathBuf = pick(&a.out_trace, file, "out-trace")?.unwrap_or_else(|| {
        let mut s = out_model.clone().into_os_string();
        s.push(".trace.txt");
        PathBuf::from(s)
    });

    let (_, x) = read_covariates(&x_path)?;
    let data = match (q_path, p_path) {
        (Some(q), None) => {
            let (in_grid, qs) = read_quantiles(&q)?;
            check_rows(&x_path, x.nrows(), &q, qs.len())?;
            if want_densify {
                let target = levels.unwrap_or_default();
                let dense = qs.iter().map(|q| densify(q, &target)).collect::<Result<Vec<_>>>()?;
                cfg.grid = target;
                DistributionalDataset::from_quantiles(x, &dense)?
            } else {
                cfg.grid = levels.unwrap_or(in_grid);
                DistributionalDataset::from_quantiles(x, &qs)?
            }
        }
        (None, Some(p)) => {
            let outcomes = read_points(&p, x.nrows())?;
            cfg.grid = levels.unwrap_or_default();
            DistributionalDataset::new(x, outcomes)?
        }
        _ => return Err(WdlError::invalid("give exactly one of --q and --points")),
    };
    say(format!(
        "fitting K={} on {} rows with {} covariates",
        cfg.k,
        data.n(),
        data.p()
    ));
    let model = train(&data, &cfg)?;
    write_bytes(&out_model, &model.serialize()?)?;
    let mut trace = model.trace_text();
    trace.push_str(&format!("# best_iteration {}\n", model.best_iteration()));
    trace.push_str(&format!("# final_loss {}\n", model.final_loss()));
    write_bytes(&out_trace, trace.as_bytes())?;
    let first = model.trace().first().map(|r| r.train_loss).unwrap_or(f64::NAN);
    say(format!(
        "initial train loss {first}, best iteration {}, final loss {}; model written to {}",
        model.best_iteration(),
        model.final_loss(),
        out_model.display()
    ));
    Ok(())
}

fn load_model(path: &Path) -> Result<ScgmmModel> {
    let bytes = fs::read(path).map_err(|e| WdlError::invalid(format!("{}: {e}", path.display())))?;
    ScgmmModel::deserialize(&bytes).map_err(|e| match e {
        WdlError::Decode(m) => WdlError::Decode(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn check_model_dim(model: &ScgmmModel, x_path: &Path, p: usize) -> Result<()> {
    if p != model.n_features() {
        return Err(WdlError::invalid(format!(
            "{}: {p} covariate columns but the model expects {}",
            x_path.display(),
            model.n_features()
        )));
    }
    Ok(())
}

fn cmd_predict(a: &PredictArgs, file: &ConfigFile, say: &dyn Fn(String)) -> Result<()> {
    file.check_keys(&["model", "x", "levels", "out-q", "out-params"])?;
    let model_path: PathBuf = required(&a.model, file, "model")?;
    let x_path: PathBuf = required(&a.x, file, "x")?;
    let out_q: PathBuf = required(&a.out_q, file, "out-q")?;
    let out_params: Option<PathBuf> = pick(&a.out_params, file, "out-params")?;
    let model = load_model(&model_path)?;
    let grid = match pick(&a.levels, file, "levels")? {
        Some(s) => parse_levels(&s)?,
        None => model.grid().clone(),
    };
    let (_, x) = read_covariates(&x_path)?;
    check_model_dim(&model, &x_path, x.ncols())?;
    let params = x
        .rows()
        .into_iter()
        .map(|r| predict_params(&model, &r.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let qs = params
        .iter()
        .map(|t| gmm_quantile_function(t, &grid))
        .collect::<Result<Vec<_>>>()?;
    write_quantiles(&out_q, &grid, &qs)?;
    if let Some(p) = out_params {
        let k = model.k();
        let mut header: Vec<String> = (1..=k).map(|j| format!("pi_{j}")).collect();
        header.extend((1..=k).map(|j| format!("mu_{j}")));
        header.extend((1..=k).map(|j| format!("sigma_{j}")));
        let rows: Vec<Vec<f64>> = params
            .iter()
            .map(|t| [t.weights(), t.means(), t.sds()].concat())
            .collect();
        write_table(&p, &header, &rows)?;
    }
    say(format!("predicted {} rows to {}", qs.len(), out_q.display()));
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs, file: &ConfigFile, say: &dyn Fn(String)) -> Result<()> {
    file.check_keys(&["observed", "predicted", "out", "summary"])?;
    let obs_path: PathBuf = required(&a.observed, file, "observed")?;
    let pred_path: PathBuf = required(&a.predicted, file, "predicted")?;
    let out: Option<PathBuf> = pick(&a.out, file, "out")?;
    let summary: Option<PathBuf> = pick(&a.summary, file, "summary")?;
    if out.is_none() && summary.is_none() {
        return Err(WdlError::invalid("give --out and/or --summary"));
    }
    let (g1, obs) = read_quantiles(&obs_path)?;
    let (g2, pred) = read_quantiles(&pred_path)?;
    if g1 != g2 {
        return Err(WdlError::invalid(format!(
            "{} and {} use different quantile levels",
            obs_path.display(),
            pred_path.display()
        )));
    }
    check_rows(&obs_path, obs.len(), &pred_path, pred.len())?;
    let (per_sample, mean, r2, var) = match prediction_loss(&obs, &pred) {
        Ok(r) => (r.per_sample, r.mean_loss, Some(r.r_squared), r.variance),
        Err(WdlError::UndefinedRSquared { mean_loss }) => {
            eprintln!("warning: observed quantile functions are all identical; R-squared is undefined");
            let per = obs
                .iter()
                .zip(&pred)
                .map(|(o, p)| crate::distributions::w2_squared(o, p))
                .collect::<Result<Vec<_>>>()?;
            (per, mean_loss, None, 0.0)
        }
        Err(e) => return Err(e),
    };
    if let Some(p) = &out {
        let rows: Vec<Vec<f64>> = per_sample.iter().enumerate().map(|(i, w)| vec![i as f64, *w]).collect();
        write_table(p, &["row".to_string(), "w2".to_string()], &rows)?;
    }
    if let Some(p) = &summary {
        let doc = serde_json::json!({
            "n": per_sample.len(),
            "mean_loss": mean,
            "r_squared": r2,
            "variance": var,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| WdlError::Decode(e.to_string()))?;
        write_bytes(p, text.as_bytes())?;
    }
    match r2 {
        Some(r) => say(format!("mean loss {mean}, R-squared {r}")),
        None => say(format!("mean loss {mean}, R-squared undefined")),
    }
    Ok(())
}

fn cmd_pdp(a: &PdpArgs, file: &ConfigFile, say: &dyn Fn(String)) -> Result<()> {
    file.check_keys(&["model", "x", "feature", "rho", "values", "grid-points", "mode", "out"])?;
    let model_path: PathBuf = required(&a.model, file, "model")?;
    let x_path: PathBuf = required(&a.x, file, "x")?;
    let out: PathBuf = required(&a.out, file, "out")?;
    let feature_spec: String = required(&a.feature, file, "feature")?;
    let mode = pick_or(&a.mode, file, "mode", "quantile".to_string())?;
    let rho: f64 = pick_or(&a.rho, file, "rho", 0.5)?;
    if mode != "params" && !(rho > 0.0 && rho < 1.0) {
        return Err(WdlError::invalid(format!("--rho: {rho} is outside (0, 1)")));
    }
    let model = load_model(&model_path)?;
    let (header, x) = read_covariates(&x_path)?;
    check_model_dim(&model, &x_path, x.ncols())?;
    let feature = header
        .iter()
        .position(|h| *h == feature_spec)
        .or_else(|| feature_spec.parse::<usize>().ok().filter(|&j| j >= 1).map(|j| j - 1))
        .filter(|&j| j < x.ncols())
        .ok_or_else(|| WdlError::invalid(format!("--feature: no column `{feature_spec}`")))?;
    if x.nrows() == 0 {
        return Err(WdlError::invalid(format!("{}: no covariate rows", x_path.display())));
    }
    let values = match pick(&a.values, file, "values")? {
        Some(s) => parse_list(&s, "--values")?,
        None => {
            let m: usize = pick_or(&a.grid_points, file, "grid-points", 21)?;
            if m == 0 {
                return Err(WdlError::invalid("--grid-points must be positive"));
            }
            let col = x.column(feature);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == 1 || lo == hi {
                vec![lo]
            } else {
                (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
            }
        }
    };
    match mode.as_str() {
        "quantile" => {
            let c = functional_pdp(&model, x.view(), feature, &values, rho)?;
            let rows: Vec<Vec<f64>> = c
                .feature_values
                .iter()
                .zip(&c.values)
                .map(|(v, q)| vec![*v, *q])
                .collect();
            write_table(&out, &["feature_value".to_string(), "value".to_string()], &rows)?;
        }
        "params" => {
            let c = marginal_param_curve(&model, x.view(), feature, &values)?;
            let k = model.k();
            let mut header = vec!["feature_value".to_string()];
            header.extend((1..=k).map(|j| format!("pi_{j}")));
            header.extend((1..=k).map(|j| format!("mu_{j}")));
            header.extend((1..=k).map(|j| format!("sigma_{j}")));
            let rows: Vec<Vec<f64>> = (0..values.len())
                .map(|j| {
                    [
                        vec![values[j]],
                        c.weights[j].clone(),
                        c.means[j].clone(),
                        c.sds[j].clone(),
                    ]
                    .concat()
                })
                .collect();
            write_table(&out, &header, &rows)?;
        }
        "ice" => {
            let c = ice_curves(&model, x.view(), feature, &values, rho)?;
            let mut rows = Vec::new();
            for (r, curve) in c.curves.iter().enumerate() {
                for (v, q) in values.iter().zip(curve) {
                    rows.push(vec![r as f64, *v, *q]);
                }
            }
            let header = ["row", "feature_value", "value"].map(String::from);
            write_table(&out, &header, &rows)?;
        }
        other => return Err(WdlError::invalid(format!("--mode: unknown mode `{other}`"))),
    }
    say(format!("wrote {} curve points to {}", values.len(), out.display()));
    Ok(())
}

fn check_rows(a: &Path, na: usize, b: &Path, nb: usize) -> Result<()> {
    if na != nb {
        return Err(WdlError::invalid(format!(
            "{} has {na} rows but {} has {nb}",
            a.display(),
            b.display()
        )));
    }
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| WdlError::invalid(format!("{}: {e}", path.display())))
}

fn csv_err(path: &Path, e: csv::Error) -> WdlError {
    let at = e.position().map(|p| format!(":{}", p.line())).unwrap_or_default();
    WdlError::invalid(format!("{}{at}: {e}", path.display()))
}

/// Rows of a headed numeric CSV. Cells must be finite.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(WdlError::invalid(format!(
                    "{}:{line}: column {} holds `{cell}`, expected a finite number",
                    path.display(),
                    header.get(j).map(String::as_str).unwrap_or("?")
                ))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush()
        .map_err(|e| WdlError::invalid(format!("{}: {e}", path.display())))
}

/// Covariate CSV with header `x1..xp`.
pub fn read_covariates(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let (header, rows) = read_table(path)?;
    if header.is_empty() {
        return Err(WdlError::invalid(format!("{}: no columns", path.display())));
    }
    let p = header.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let n = flat.len() / p;
    let x = Array2::from_shape_vec((n, p), flat).map_err(|e| WdlError::invalid(format!("{}: {e}", path.display())))?;
    Ok((header, x))
}

pub fn write_covariates(path: &Path, x: &Array2<f64>) -> Result<()> {
    let header: Vec<String> = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    write_table(path, &header, &rows)
}

/// Quantile CSV with header `q_<level>`; every row must be non-decreasing.
pub fn read_quantiles(path: &Path) -> Result<(LevelGrid, Vec<QuantileFunction>)> {
    let (header, rows) = read_table(path)?;
    let levels = header
        .iter()
        .map(|h| {
            h.strip_prefix("q_")
                .and_then(|l| l.parse::<f64>().ok())
                .ok_or_else(|| WdlError::invalid(format!("{}: header `{h}` is not q_<level>", path.display())))
        })
        .collect::<Result<Vec<f64>>>()?;
    let grid = LevelGrid::new(levels).map_err(|e| WdlError::invalid(format!("{}: {e}", path.display())))?;
    let qs = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            QuantileFunction::new(grid.clone(), r)
                .map_err(|e| WdlError::invalid(format!("{}: data row {}: {e}", path.display(), i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, qs))
}

pub fn write_quantiles(path: &Path, grid: &LevelGrid, qs: &[QuantileFunction]) -> Result<()> {
    let header: Vec<String> = grid.levels().iter().map(|l| format!("q_{l}")).collect();
    let rows: Vec<Vec<f64>> = qs.iter().map(|q| q.values().to_vec()).collect();
    write_table(path, &header, &rows)
}

/// Long CSV `sample_id,value`; `sample_id` is the 0-based covariate row.
pub fn read_points(path: &Path, n_rows: usize) -> Result<Vec<EmpiricalDistribution>> {
    let (header, rows) = read_table(path)?;
    if header != ["sample_id", "value"] {
        return Err(WdlError::invalid(format!(
            "{}: expected header sample_id,value",
            path.display()
        )));
    }
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); n_rows];
    for (line, r) in rows.iter().enumerate() {
        let id = r[0];
        if id < 0.0 || id.fract() != 0.0 || id as usize >= n_rows {
            return Err(WdlError::invalid(format!(
                "{}: data row {}: sample_id {id} is not a covariate row index",
                path.display(),
                line + 1
            )));
        }
        groups[id as usize].push(r[1]);
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            EmpiricalDistribution::new(g).map_err(|e| WdlError::invalid(format!("{}: sample {i}: {e}", path.display())))
        })
        .collect()
}

pub fn write_points(path: &Path, outcomes: &[EmpiricalDistribution]) -> Result<()> {
    let rows: Vec<Vec<f64>> = outcomes
        .iter()
        .enumerate()
        .flat_map(|(i, g)| g.points().iter().map(move |&v| vec![i as f64, v]))
        .collect();
    write_table(path, &["sample_id".to_string(), "value".to_string()], &rows)
}

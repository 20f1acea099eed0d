//! Command-line front end: `simulate`, `fit`, `predict`, `elbow`, `metrics`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::io::{
    self, format_value, load_observations, load_truth, output_precision, ModelConfig, RunManifest,
    RunParams, RunRecord, Table,
};
use crate::metrics::{elbow_scan, mse_coeffs, mspe, Truth, TypeScores};
use crate::model::ObservationSet;
use crate::sampler::{run_fit, FitResult, RowSummary};
use crate::simgen::{generate, Study, StudySpec};
use crate::subset::SubsetMode;

#[derive(Debug, Parser)]
#[command(name = "epr", version, about = "Exact posterior replicates for spatial GLMMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic study.
    Simulate(SimulateArgs),
    /// Fit a model and write posterior summaries.
    Fit(FitArgs),
    /// Re-run a recorded fit and write one prediction table.
    Predict(PredictArgs),
    /// Fit once per subset size and tabulate holdout error.
    Elbow(ElbowArgs),
    /// Score a fit against known truth.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// biv, gauss, pois or bern.
    #[arg(long)]
    study: String,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write a fitting config with 25 knots per block instead of the generating 15.
    #[arg(long)]
    misspecified: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Srs,
    All,
}

impl ModeArg {
    fn mode(self) -> SubsetMode {
        match self {
            ModeArg::Srs => SubsetMode::Srs,
            ModeArg::All => SubsetMode::All,
        }
    }
}

#[derive(Debug, Args)]
struct FitInputs {
    /// Observation CSV.
    #[arg(long)]
    data: PathBuf,
    /// Covariate CSV.
    #[arg(long)]
    covariates: PathBuf,
    /// Model configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Sites per replicate; defaults to all training sites.
    #[arg(long)]
    subset_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Srs)]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    inputs: FitInputs,
    #[arg(long)]
    out: PathBuf,
    /// Also write per-replicate draws.
    #[arg(long)]
    store_replicates: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScaleArg {
    Latent,
    ResponseMean,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ScaleArg::Latent)]
    scale: ScaleArg,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct ElbowArgs {
    /// Comma-separated subset sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<usize>,
    #[command(flatten)]
    inputs: FitInputs,
    /// Latent truth CSV; adds MSPE columns.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Latent truth CSV (`site_id,type,latent`).
    #[arg(long)]
    truth: PathBuf,
    /// Output CSV; defaults to `scores.csv` in the fit directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run_cli(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Invalid(violations) = &e {
                for v in violations {
                    eprintln!("  {v}");
                }
            }
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::Simulate(args) => simulate(args, argv),
        Command::Fit(args) => {
            let threads = args.inputs.threads;
            with_threads(threads, || fit(args, argv))
        }
        Command::Predict(args) => with_threads(args.threads, || predict(args, argv)),
        Command::Elbow(args) => {
            let threads = args.inputs.threads;
            with_threads(threads, || elbow(args, argv))
        }
        Command::Metrics(args) => metrics(args, argv),
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn absolute(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

fn simulate(args: SimulateArgs, argv: &[String]) -> Result<()> {
    let study = Study::parse(&args.study)?;
    let mut spec = StudySpec::new(study, args.m, args.seed);
    if args.misspecified {
        spec = spec.misspecified();
    }
    let started = Instant::now();
    let sim = generate(&spec)?;
    let mut outputs = io::write_observations(&sim.obs, &args.out)?;
    outputs.extend(io::write_truth(&sim.obs, &sim.truth, &args.out)?);
    let config_path = args.out.join("config.toml");
    fs::write(&config_path, sim.config.to_toml())
        .map_err(|e| Error::io(format!("writing {}", config_path.display()), e))?;
    outputs.push(config_path);

    let mut manifest = RunManifest::new("simulate", argv);
    manifest.seed = Some(args.seed);
    manifest.config = Some(sim.config);
    manifest.add_outputs(&outputs)?;
    manifest
        .timings_seconds
        .insert("total".into(), started.elapsed().as_secs_f64());
    manifest.write(&args.out.join("manifest.json"))
}

struct Prepared {
    obs: ObservationSet,
    config: ModelConfig,
    run: RunParams,
}

fn prepare(inputs: &FitInputs, store_replicates: bool) -> Result<Prepared> {
    let config = ModelConfig::load(&inputs.config)?;
    let obs = load_observations(&inputs.data, &inputs.covariates)?;
    let mode = inputs.mode.mode();
    let subset_size = match (mode, inputs.subset_size) {
        (SubsetMode::Srs, Some(n)) => n,
        _ => obs.training_sites().len(),
    };
    Ok(Prepared {
        obs,
        config,
        run: RunParams {
            reps: inputs.reps,
            subset_size,
            mode,
            seed: inputs.seed,
            store_replicates,
        },
    })
}

fn mode_name(mode: SubsetMode) -> &'static str {
    match mode {
        SubsetMode::Srs => "srs",
        SubsetMode::All => "all",
    }
}

fn record_timings(manifest: &mut RunManifest, fit: &FitResult) {
    let t = &fit.timings;
    for (name, d) in [
        ("total", t.total),
        ("setup", t.setup),
        ("replicates", t.replicates),
        ("gather", t.gather),
        ("draw", t.draw),
        ("solve", t.solve),
        ("summarize", t.summarize),
    ] {
        manifest.timings_seconds.insert(name.into(), d.as_secs_f64());
    }
}

fn fit(args: FitArgs, argv: &[String]) -> Result<()> {
    let prep = prepare(&args.inputs, args.store_replicates)?;
    let cfg = prep.config.fit_config(&prep.obs, &prep.run)?;
    let result = run_fit(&prep.obs, &cfg)?;
    let outputs = io::write_fit(&prep.obs, &result, &args.out)?;

    let mut manifest = RunManifest::new("fit", argv);
    manifest.seed = Some(prep.run.seed);
    manifest.config = Some(prep.config);
    manifest.run = Some(RunRecord {
        data: absolute(&args.inputs.data),
        covariates: absolute(&args.inputs.covariates),
        reps: prep.run.reps,
        subset_size: prep.run.subset_size,
        mode: mode_name(prep.run.mode).into(),
        store_replicates: prep.run.store_replicates,
    });
    manifest.add_inputs(&[&args.inputs.data, &args.inputs.covariates, &args.inputs.config])?;
    manifest.add_outputs(&outputs)?;
    record_timings(&mut manifest, &result);
    manifest.write(&args.out.join("manifest.json"))
}

fn predict(args: PredictArgs, argv: &[String]) -> Result<()> {
    let recorded = RunManifest::load(&args.fit.join("manifest.json"))?;
    let (Some(config), Some(run), Some(seed)) = (recorded.config, recorded.run, recorded.seed)
    else {
        return Err(Error::Config(format!(
            "{} was not written by `fit`",
            args.fit.display()
        )));
    };
    for path in [&run.data, &run.covariates] {
        let digest = io::sha256_file(path)?;
        let listed = recorded
            .inputs
            .iter()
            .any(|d| d.sha256 == digest);
        if !listed {
            return Err(Error::Config(format!(
                "{} changed since the fit was recorded",
                path.display()
            )));
        }
    }
    let obs = load_observations(&run.data, &run.covariates)?;
    let params = RunParams {
        reps: run.reps,
        subset_size: run.subset_size,
        mode: if run.mode == "all" { SubsetMode::All } else { SubsetMode::Srs },
        seed,
        store_replicates: false,
    };
    let mut cfg = config.fit_config(&obs, &params)?;
    cfg.score = false;
    let result = run_fit(&obs, &cfg)?;
    let summaries: Vec<&RowSummary> = match args.scale {
        ScaleArg::Latent => result.latent.iter().map(|l| &l.summary).collect(),
        ScaleArg::ResponseMean => result.response.iter().collect(),
    };

    let digits = output_precision();
    let qh: String = result.quantiles.iter().map(|q| format!(",q{q}")).collect();
    let mut text = format!("site_id,type,holdout,mean,sd{qh}\n");
    for s in summaries {
        let row = &obs.rows[s.row];
        let _ = write!(
            text,
            "{},{},{},{},{}",
            obs.sites[row.site].id,
            row.kind + 1,
            u8::from(obs.holdout[row.site]),
            format_value(s.mean, digits),
            format_value(s.sd, digits)
        );
        for q in &s.quantiles {
            let _ = write!(text, ",{}", format_value(*q, digits));
        }
        text.push('\n');
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(&args.out, text).map_err(|e| Error::io(format!("writing {}", args.out.display()), e))?;

    let mut manifest = RunManifest::new("predict", argv);
    manifest.seed = Some(seed);
    manifest.add_inputs(&[&run.data, &run.covariates])?;
    manifest.add_outputs(std::slice::from_ref(&args.out))?;
    record_timings(&mut manifest, &result);
    manifest.write(&args.out.with_extension("manifest.json"))
}

/// Truth values aligned with the rows of `obs`.
fn align_truth(obs: &ObservationSet, path: &Path) -> Result<Truth> {
    let (latent, coefficients) = load_truth(path)?;
    let values = obs
        .rows
        .iter()
        .map(|row| {
            let id = obs.sites[row.site].id;
            latent.get(&(id, row.kind + 1)).copied().ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("no truth for site {id} type {}", row.kind + 1),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (beta, eta) = coefficients.unwrap_or_default();
    Ok(Truth {
        latent: values,
        beta,
        eta,
    })
}

fn elbow(args: ElbowArgs, argv: &[String]) -> Result<()> {
    let prep = prepare(&args.inputs, false)?;
    let cfg = prep.config.fit_config(&prep.obs, &prep.run)?;
    let truth = args
        .truth
        .as_deref()
        .map(|p| align_truth(&prep.obs, p))
        .transpose()?;
    let rows = elbow_scan(&prep.obs, &cfg, &args.grid, truth.as_ref())?;

    let digits = output_precision();
    let kinds = prep.obs.num_types;
    let mut text = String::from("n");
    if truth.is_some() {
        for k in 1..=kinds {
            let _ = write!(text, ",mspe_type{k}");
        }
    }
    for k in 1..=kinds {
        let _ = write!(text, ",hove_type{k}");
    }
    text.push_str(",wall_seconds\n");
    let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format_value(x, digits));
    for row in &rows {
        text.push_str(&row.n.to_string());
        if truth.is_some() {
            for v in &row.mspe {
                let _ = write!(text, ",{}", na(*v));
            }
        }
        for v in &row.hove {
            let _ = write!(text, ",{}", na(*v));
        }
        let _ = writeln!(text, ",{}", format_value(row.wall_seconds, digits));
    }
    fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(format!("creating {}", args.out.display()), e))?;
    let path = args.out.join("elbow.csv");
    fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;

    let mut manifest = RunManifest::new("elbow", argv);
    manifest.seed = Some(prep.run.seed);
    manifest.config = Some(prep.config);
    let mut inputs: Vec<&Path> = vec![&args.inputs.data, &args.inputs.covariates, &args.inputs.config];
    if let Some(t) = &args.truth {
        inputs.push(t);
    }
    manifest.add_inputs(&inputs)?;
    manifest.add_outputs(&[path])?;
    for row in &rows {
        manifest
            .timings_seconds
            .insert(format!("n={}", row.n), row.wall_seconds);
    }
    manifest.write(&args.out.join("manifest.json"))
}

fn column(table: &Table, name: &str, path: &Path) -> Result<usize> {
    table.column(name).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: format!("missing column `{name}`"),
    })
}

fn integer<T: std::str::FromStr>(raw: &str, path: &Path, line: usize) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad integer `{raw}`"),
    })
}

/// Scores computed from the fit's tables: MSPE from the holdout latent means,
/// MSE from the coefficient means, the rest copied from `fit_scores.csv`.
fn metrics(args: MetricsArgs, argv: &[String]) -> Result<()> {
    let (truth, coefficients) = load_truth(&args.truth)?;

    let latent_path = args.fit.join("latent_summary.csv");
    let latent = Table::load(&latent_path)?;
    let (c_site, c_type, c_hold, c_est) = (
        column(&latent, "site_id", &latent_path)?,
        column(&latent, "type", &latent_path)?,
        column(&latent, "holdout", &latent_path)?,
        column(&latent, "log_scale_mean", &latent_path)?,
    );
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, row) in latent.rows.iter().enumerate() {
        if row[c_hold] != "1" {
            continue;
        }
        let site: u64 = integer(&row[c_site], &latent_path, i + 2)?;
        let kind: usize = integer(&row[c_type], &latent_path, i + 2)?;
        if kind == 0 {
            return Err(Error::Parse {
                path: latent_path.clone(),
                line: i + 2,
                message: "type indices start at 1".into(),
            });
        }
        let t = truth.get(&(site, kind)).copied().ok_or_else(|| Error::Parse {
            path: args.truth.clone(),
            line: 0,
            message: format!("no truth for site {site} type {kind}"),
        })?;
        let estimate = latent.number(i, c_est, &latent_path)?.unwrap_or(f64::NAN);
        if pairs.len() < kind {
            pairs.resize(kind, (Vec::new(), Vec::new()));
        }
        pairs[kind - 1].0.push(t);
        pairs[kind - 1].1.push(estimate);
    }

    let scores_path = args.fit.join("fit_scores.csv");
    let mut copied: HashMap<String, TypeScores> = HashMap::new();
    if scores_path.exists() {
        let table = Table::load(&scores_path)?;
        let c_label = column(&table, "type", &scores_path)?;
        let cols = ["hove", "pmcc", "crps", "waic"]
            .map(|name| column(&table, name, &scores_path));
        let [h, p, c, w] = cols;
        let (h, p, c, w) = (h?, p?, c?, w?);
        for (i, row) in table.rows.iter().enumerate() {
            copied.insert(
                row[c_label].clone(),
                TypeScores {
                    hove: table.number(i, h, &scores_path)?,
                    pmcc: table.number(i, p, &scores_path)?,
                    crps: table.number(i, c, &scores_path)?,
                    waic: table.number(i, w, &scores_path)?,
                    ..TypeScores::default()
                },
            );
        }
    }

    let mse = match coefficients {
        Some((beta, eta)) => {
            let coef_path = args.fit.join("coefficient_summary.csv");
            let table = Table::load(&coef_path)?;
            let c_mean = column(&table, "mean", &coef_path)?;
            let estimate = (0..table.rows.len())
                .map(|i| Ok(table.number(i, c_mean, &coef_path)?.unwrap_or(f64::NAN)))
                .collect::<Result<Vec<f64>>>()?;
            let true_coef: Vec<f64> = beta.into_iter().chain(eta).collect();
            if true_coef.len() == estimate.len() {
                Some(mse_coeffs(&true_coef, &estimate)?)
            } else {
                None
            }
        }
        None => None,
    };

    let kinds = pairs.len().max(copied.len().saturating_sub(1));
    pairs.resize(kinds, (Vec::new(), Vec::new()));
    let mut per_type = Vec::with_capacity(kinds);
    for (k, (t, e)) in pairs.iter().enumerate() {
        let mut s = copied.remove(&(k + 1).to_string()).unwrap_or_default();
        s.mspe = if t.is_empty() { None } else { Some(mspe(t, e)?) };
        s.mse = mse;
        per_type.push(s);
    }
    let mut pooled = copied.remove("pooled").unwrap_or_default();
    let all_t: Vec<f64> = pairs.iter().flat_map(|(t, _)| t.iter().copied()).collect();
    let all_e: Vec<f64> = pairs.iter().flat_map(|(_, e)| e.iter().copied()).collect();
    pooled.mspe = if all_t.is_empty() { None } else { Some(mspe(&all_t, &all_e)?) };
    pooled.mse = mse;

    let out = args.out.unwrap_or_else(|| args.fit.join("scores.csv"));
    io::write_scores(&per_type, &pooled, &out)?;
    let mut manifest = RunManifest::new("metrics", argv);
    manifest.add_inputs(&[&args.truth, &latent_path])?;
    manifest.add_outputs(std::slice::from_ref(&out))?;
    manifest.write(&out.with_extension("manifest.json"))
}

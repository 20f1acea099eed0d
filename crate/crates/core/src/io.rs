//! File formats: observation/covariate CSVs, the TOML model configuration,
//! result tables and the run manifest.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{bounding_box, BasisRequest, DistanceMetric};
use crate::error::{Error, Result};
use crate::metrics::{Truth, TypeScores};
use crate::model::{
    CovariateTerm, DesignSpec, FamilyKind, HyperpriorConfig, ObservationSet, Row, Site,
};
use crate::sampler::{FitConfig, FitResult, RowSummary};
use crate::simgen::Study;
use crate::subset::SubsetMode;

/// Environment variable overriding the significant digits of result tables.
pub const PRECISION_ENV: &str = "EPR_PRECISION";
const DEFAULT_PRECISION: usize = 10;

fn default_alpha() -> f64 {
    1.0
}
fn default_kappa() -> f64 {
    2.0
}
fn default_alpha_xi() -> f64 {
    crate::model::DEFAULT_ALPHA_XI
}
fn default_quantiles() -> Vec<f64> {
    vec![0.025, 0.5, 0.975]
}
fn default_one() -> f64 {
    1.0
}
fn default_row_scale() -> f64 {
    1.5
}
fn default_stride() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_distance() -> String {
    "planar".to_string()
}

/// Model configuration file (flat TOML keys).
///
/// ```toml
/// families = ["logit_beta", "weibull"]
/// covariates = [["intercept", "x1", "x2"], ["intercept", "x1", "x2", "response:1"]]
/// basis = ["rbf:1:15", "rbf:2:15", "rbf:shared:15"]
/// knot_domain = [[1.0, 1000.0]]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// One of `logit_beta`, `weibull`, `gaussian`, `poisson`, `binomial` per type.
    pub families: Vec<String>,
    #[serde(default = "default_alpha")]
    pub logit_beta_alpha: f64,
    #[serde(default = "default_kappa")]
    pub logit_beta_kappa: f64,
    #[serde(default = "default_alpha_xi")]
    pub alpha_xi: f64,
    /// Per type: `intercept`, a covariate column name, or `response:<k>`.
    pub covariates: Vec<Vec<String>>,
    /// `rbf:<type|shared>:<count>[:bandwidth]` or `bisquare:<type|shared>:<nx>x<ny>[:radius]`.
    #[serde(default)]
    pub basis: Vec<String>,
    /// Per-axis `[lo, hi]` for knot placement; defaults to the site bounding box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knot_domain: Option<Vec<[f64; 2]>>,
    /// `planar` or `great_circle`.
    #[serde(default = "default_distance")]
    pub distance: String,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    #[serde(default = "default_stride")]
    pub prediction_stride: usize,
    #[serde(default = "default_true")]
    pub score: bool,
    #[serde(default = "default_one")]
    pub rho_shape: f64,
    #[serde(default = "default_one")]
    pub rho_rate: f64,
    #[serde(default = "default_one")]
    pub block_variance_shape: f64,
    #[serde(default = "default_one")]
    pub shape_z_shape: f64,
    #[serde(default = "default_one")]
    pub shape_z_scale: f64,
    #[serde(default = "default_one")]
    pub row_variance_shape: f64,
    #[serde(default = "default_row_scale")]
    pub row_variance_scale: f64,
}

impl ModelConfig {
    pub fn new(families: Vec<String>, covariates: Vec<Vec<String>>, basis: Vec<String>) -> Self {
        let priors = HyperpriorConfig::default();
        ModelConfig {
            families,
            logit_beta_alpha: default_alpha(),
            logit_beta_kappa: default_kappa(),
            alpha_xi: default_alpha_xi(),
            covariates,
            basis,
            knot_domain: None,
            distance: default_distance(),
            quantiles: default_quantiles(),
            prediction_stride: 1,
            score: true,
            rho_shape: priors.rho_shape,
            rho_rate: priors.rho_rate,
            block_variance_shape: priors.block_variance_shape,
            shape_z_shape: priors.shape_z_shape,
            shape_z_scale: priors.shape_z_scale,
            row_variance_shape: priors.row_variance_shape,
            row_variance_scale: priors.row_variance_scale,
        }
    }

    /// The fitting configuration for a simulated study.
    pub fn for_study(study: Study, knots: usize, domain: [f64; 2]) -> Self {
        let base = vec!["intercept".to_string(), "x1".to_string(), "x2".to_string()];
        let mut cfg = match study {
            Study::Bivariate => {
                let mut second = base.clone();
                second.push("response:1".to_string());
                ModelConfig::new(
                    vec!["logit_beta".into(), "weibull".into()],
                    vec![base, second],
                    vec![
                        format!("rbf:1:{knots}"),
                        format!("rbf:2:{knots}"),
                        format!("rbf:shared:{knots}"),
                    ],
                )
            }
            other => {
                let family = match other {
                    Study::Gaussian => "gaussian",
                    Study::Poisson => "poisson",
                    _ => "binomial",
                };
                ModelConfig::new(vec![family.into()], vec![base], vec![format!("rbf:1:{knots}")])
            }
        };
        cfg.knot_domain = Some(vec![domain]);
        cfg
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn priors(&self) -> HyperpriorConfig {
        HyperpriorConfig {
            rho_shape: self.rho_shape,
            rho_rate: self.rho_rate,
            block_variance_shape: self.block_variance_shape,
            shape_z_shape: self.shape_z_shape,
            shape_z_scale: self.shape_z_scale,
            row_variance_shape: self.row_variance_shape,
            row_variance_scale: self.row_variance_scale,
        }
    }

    pub fn family_kinds(&self) -> Result<Vec<FamilyKind>> {
        self.families
            .iter()
            .map(|name| {
                let family = match name.as_str() {
                    "logit_beta" | "logistic" => FamilyKind::LogitBeta {
                        alpha: self.logit_beta_alpha,
                        kappa: self.logit_beta_kappa,
                    },
                    "weibull" => FamilyKind::Weibull,
                    "gaussian" => FamilyKind::Gaussian,
                    "poisson" => FamilyKind::Poisson {
                        alpha_xi: self.alpha_xi,
                    },
                    "binomial" | "bernoulli" => FamilyKind::Binomial {
                        alpha_xi: self.alpha_xi,
                    },
                    other => return Err(Error::Config(format!("unknown family `{other}`"))),
                };
                family.check_constants().map_err(Error::Config)?;
                Ok(family)
            })
            .collect()
    }

    /// Resolves families and the design (knots are placed against `obs`).
    pub fn resolve(&self, obs: &ObservationSet) -> Result<(Vec<FamilyKind>, DesignSpec)> {
        let families = self.family_kinds()?;
        if self.covariates.len() != families.len() {
            return Err(Error::Config(format!(
                "{} covariate lists for {} families",
                self.covariates.len(),
                families.len()
            )));
        }
        let covariates = self
            .covariates
            .iter()
            .map(|terms| terms.iter().map(|t| CovariateTerm::parse(t)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        let metric = match self.distance.as_str() {
            "planar" => DistanceMetric::Planar,
            "great_circle" => DistanceMetric::GreatCircle,
            other => return Err(Error::Config(format!("unknown distance `{other}`"))),
        };
        let domain = match &self.knot_domain {
            Some(d) => d.clone(),
            None => bounding_box(&obs.coords()),
        };
        let blocks = self
            .basis
            .iter()
            .map(|b| BasisRequest::parse(b)?.resolve(&domain, metric))
            .collect::<Result<Vec<_>>>()?;
        Ok((
            families,
            DesignSpec {
                covariates,
                blocks,
                metric,
            },
        ))
    }

    /// Full sampler configuration; run parameters come from the caller.
    pub fn fit_config(&self, obs: &ObservationSet, run: &RunParams) -> Result<FitConfig> {
        let (families, design) = self.resolve(obs)?;
        Ok(FitConfig {
            reps: run.reps,
            subset_size: run.subset_size,
            mode: run.mode,
            seed: run.seed,
            families,
            design,
            priors: self.priors(),
            store_replicates: run.store_replicates,
            quantiles: self.quantiles.clone(),
            prediction_stride: self.prediction_stride,
            score: self.score,
        })
    }
}

/// Run parameters given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub reps: usize,
    pub subset_size: usize,
    pub mode: SubsetMode,
    pub seed: u64,
    pub store_replicates: bool,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
    path: &Path,
    line: usize,
) -> Result<T> {
    let raw = record
        .get(idx)
        .ok_or_else(|| parse_err(path, line, format!("missing `{name}`")))?;
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("bad `{name}` value `{raw}`")))
}

fn record_line(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

/// Loads `site_id,s1[,s2],type,value,holdout[,trials]` plus `site_id,<covariates...>`.
pub fn load_observations(obs_path: &Path, cov_path: &Path) -> Result<ObservationSet> {
    let mut rdr = reader(obs_path)?;
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let dim = match names.as_slice() {
        ["site_id", "s1", "type", "value", "holdout", ..] => 1,
        ["site_id", "s1", "s2", "type", "value", "holdout", ..] => 2,
        _ => {
            return Err(parse_err(
                obs_path,
                1,
                "header must be site_id,s1[,s2],type,value,holdout[,trials]",
            ))
        }
    };
    let base = 1 + dim;
    let trials_col = match names.get(base + 3) {
        Some(&"trials") => Some(base + 3),
        None => None,
        Some(other) => return Err(parse_err(obs_path, 1, format!("unexpected column `{other}`"))),
    };

    let mut site_index: HashMap<u64, usize> = HashMap::new();
    let mut sites: Vec<Site> = Vec::new();
    let mut holdout: Vec<bool> = Vec::new();
    let mut rows = Vec::new();
    let mut num_types = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        let id: u64 = field(&record, 0, "site_id", obs_path, line)?;
        let coords = (0..dim)
            .map(|a| field::<f64>(&record, 1 + a, "coordinate", obs_path, line))
            .collect::<Result<Vec<_>>>()?;
        let kind: usize = field(&record, base, "type", obs_path, line)?;
        if kind == 0 {
            return Err(parse_err(obs_path, line, "type indices start at 1"));
        }
        let value: f64 = field(&record, base + 1, "value", obs_path, line)?;
        let flag: u8 = field(&record, base + 2, "holdout", obs_path, line)?;
        if flag > 1 {
            return Err(parse_err(obs_path, line, "holdout must be 0 or 1"));
        }
        let trials = match trials_col {
            Some(c) => field(&record, c, "trials", obs_path, line)?,
            None => 1,
        };
        let site = match site_index.get(&id) {
            Some(&s) => {
                if sites[s].coords != coords || holdout[s] != (flag == 1) {
                    return Err(parse_err(
                        obs_path,
                        line,
                        format!("site {id} disagrees with its earlier coordinates or holdout flag"),
                    ));
                }
                s
            }
            None => {
                site_index.insert(id, sites.len());
                sites.push(Site { id, coords });
                holdout.push(flag == 1);
                sites.len() - 1
            }
        };
        num_types = num_types.max(kind);
        rows.push(Row {
            site,
            kind: kind - 1,
            value,
            trials,
        });
    }

    let mut rdr = reader(cov_path)?;
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("site_id") {
        return Err(parse_err(cov_path, 1, "first column must be site_id"));
    }
    let cov_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut covariates: Vec<Option<Vec<f64>>> = vec![None; sites.len()];
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        let id: u64 = field(&record, 0, "site_id", cov_path, line)?;
        if record.len() != cov_names.len() + 1 {
            return Err(parse_err(cov_path, line, "wrong number of fields"));
        }
        let values = (0..cov_names.len())
            .map(|j| field::<f64>(&record, j + 1, &cov_names[j], cov_path, line))
            .collect::<Result<Vec<_>>>()?;
        if let Some(&s) = site_index.get(&id) {
            if covariates[s].replace(values).is_some() {
                return Err(parse_err(cov_path, line, format!("site {id} listed twice")));
            }
        }
    }
    let covariates = covariates
        .into_iter()
        .enumerate()
        .map(|(s, c)| {
            c.ok_or_else(|| {
                parse_err(cov_path, 0, format!("no covariates for site {}", sites[s].id))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ObservationSet::new(sites, holdout, rows, num_types, cov_names, covariates)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn coord_header(obs: &ObservationSet) -> &'static str {
    if obs.sites.first().map_or(1, |s| s.coords.len()) == 2 {
        "s1,s2"
    } else {
        "s1"
    }
}

/// Writes `observations.csv` and `covariates.csv` at full round-trip precision.
pub fn write_observations(obs: &ObservationSet, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut text = format!("site_id,{},type,value,holdout,trials\n", coord_header(obs));
    for row in &obs.rows {
        let site = &obs.sites[row.site];
        let coords: Vec<String> = site.coords.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            site.id,
            coords.join(","),
            row.kind + 1,
            row.value,
            u8::from(obs.holdout[row.site]),
            row.trials
        );
    }
    let obs_path = dir.join("observations.csv");
    write_text(&obs_path, &text)?;

    let mut text = String::from("site_id");
    for name in &obs.covariate_names {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for (site, covs) in obs.sites.iter().zip(&obs.covariates) {
        text.push_str(&site.id.to_string());
        for v in covs {
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    let cov_path = dir.join("covariates.csv");
    write_text(&cov_path, &text)?;
    Ok(vec![obs_path, cov_path])
}

/// Writes `truth.csv` (per-row latent) and `truth_coefficients.csv`.
pub fn write_truth(obs: &ObservationSet, truth: &Truth, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut text = String::from("site_id,type,latent\n");
    for (row, latent) in obs.rows.iter().zip(&truth.latent) {
        let _ = writeln!(text, "{},{},{}", obs.sites[row.site].id, row.kind + 1, latent);
    }
    let latent_path = dir.join("truth.csv");
    write_text(&latent_path, &text)?;
    let mut text = String::from("block,index,value\n");
    for (j, v) in truth.beta.iter().enumerate() {
        let _ = writeln!(text, "beta,{},{v}", j + 1);
    }
    for (j, v) in truth.eta.iter().enumerate() {
        let _ = writeln!(text, "eta,{},{v}", j + 1);
    }
    let coef_path = dir.join("truth_coefficients.csv");
    write_text(&coef_path, &text)?;
    Ok(vec![latent_path, coef_path])
}

/// Reads `truth.csv` keyed by `(site_id, type)`, plus `truth_coefficients.csv` beside it if present.
pub fn load_truth(path: &Path) -> Result<(HashMap<(u64, usize), f64>, Option<(Vec<f64>, Vec<f64>)>)> {
    let mut rdr = reader(path)?;
    let mut latent = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        let id: u64 = field(&record, 0, "site_id", path, line)?;
        let kind: usize = field(&record, 1, "type", path, line)?;
        let value: f64 = field(&record, 2, "latent", path, line)?;
        latent.insert((id, kind), value);
    }
    let coef_path = path.with_file_name("truth_coefficients.csv");
    let coefficients = if coef_path.exists() {
        let mut rdr = reader(&coef_path)?;
        let mut beta = Vec::new();
        let mut eta = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record_line(&record);
            let value: f64 = field(&record, 2, "value", &coef_path, line)?;
            match record.get(0) {
                Some("beta") => beta.push(value),
                Some("eta") => eta.push(value),
                _ => return Err(parse_err(&coef_path, line, "block must be beta or eta")),
            }
        }
        Some((beta, eta))
    } else {
        None
    };
    Ok((latent, coefficients))
}

/// Formats a result value to the configured number of significant digits.
pub fn format_value(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), v)
        .parse()
        .expect("formatted float parses");
    let magnitude = rounded.abs();
    if (1e-6..1e16).contains(&magnitude) {
        rounded.to_string()
    } else {
        format!("{rounded:e}")
    }
}

pub fn output_precision() -> usize {
    std::env::var(PRECISION_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&d| (1..=17).contains(&d))
        .unwrap_or(DEFAULT_PRECISION)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format_value(x, digits))
}

fn quantile_header(quantiles: &[f64]) -> String {
    quantiles.iter().map(|q| format!(",q{q}")).collect()
}

fn summary_line(obs: &ObservationSet, s: &RowSummary, digits: usize) -> String {
    let row = &obs.rows[s.row];
    let mut line = format!(
        "{},{},{},{},{}",
        obs.sites[row.site].id,
        row.kind + 1,
        u8::from(obs.holdout[row.site]),
        format_value(s.mean, digits),
        format_value(s.sd, digits)
    );
    for q in &s.quantiles {
        line.push(',');
        line.push_str(&format_value(*q, digits));
    }
    line
}

/// Writes every fit table into `dir`; returns the files written.
pub fn write_fit(obs: &ObservationSet, fit: &FitResult, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let digits = output_precision();
    let qh = quantile_header(&fit.quantiles);
    let mut written = Vec::new();

    let mut text = format!("site_id,type,holdout,mean,sd{qh},log_scale_mean\n");
    for l in &fit.latent {
        let _ = writeln!(
            text,
            "{},{}",
            summary_line(obs, &l.summary, digits),
            format_value(l.log_scale_mean, digits)
        );
    }
    let path = dir.join("latent_summary.csv");
    write_text(&path, &text)?;
    written.push(path);

    let mut text = format!("site_id,type,holdout,mean,sd{qh}\n");
    for s in &fit.response {
        let _ = writeln!(text, "{}", summary_line(obs, s, digits));
    }
    let path = dir.join("response_summary.csv");
    write_text(&path, &text)?;
    written.push(path);

    let mut text = String::from("label,mean,sd,lower,upper,excludes_zero\n");
    for c in &fit.coefficient_summary {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            c.label,
            format_value(c.mean, digits),
            format_value(c.sd, digits),
            format_value(c.lower, digits),
            format_value(c.upper, digits),
            c.excludes_zero()
        );
    }
    let path = dir.join("coefficient_summary.csv");
    write_text(&path, &text)?;
    written.push(path);

    if !fit.scores.is_empty() {
        let mut text = String::from("type,hove,pmcc,crps,waic\n");
        let pooled = fit.pooled_scores();
        let labelled = fit
            .scores
            .iter()
            .enumerate()
            .map(|(k, s)| ((k + 1).to_string(), *s))
            .chain(std::iter::once(("pooled".to_string(), pooled)));
        for (label, s) in labelled {
            let _ = writeln!(
                text,
                "{label},{},{},{},{}",
                opt(s.hove_mean(), digits),
                opt(s.pmcc_mean(), digits),
                opt(s.crps_mean(), digits),
                opt(s.waic(), digits)
            );
        }
        let path = dir.join("fit_scores.csv");
        write_text(&path, &text)?;
        written.push(path);
    }

    if let Some(details) = &fit.details {
        written.extend(write_replicates(obs, fit, details, dir, digits)?);
    }
    Ok(written)
}

fn write_replicates(
    obs: &ObservationSet,
    fit: &FitResult,
    details: &[crate::sampler::ReplicateDetail],
    dir: &Path,
    digits: usize,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut coefficient_table = |name: &str, start: usize, len: usize| -> Result<()> {
        let mut text = String::from("replicate");
        for label in &fit.labels[start..start + len] {
            text.push(',');
            text.push_str(label);
        }
        text.push('\n');
        for t in 0..fit.reps() {
            text.push_str(&(t + 1).to_string());
            for j in start..start + len {
                text.push(',');
                text.push_str(&format_value(fit.coefficients[(j, t)], digits));
            }
            text.push('\n');
        }
        let path = dir.join(name);
        write_text(&path, &text)?;
        written.push(path);
        Ok(())
    };
    coefficient_table("replicates_beta.csv", 0, fit.p)?;
    coefficient_table("replicates_eta.csv", fit.p, fit.r)?;

    let mut text = String::from(
        "replicate,sigma2_xi,sigma2_beta,sigma2_eta,rho_xi,rho_beta,rho_eta,rho_z\n",
    );
    for (t, th) in fit.theta.iter().enumerate() {
        let values = [
            th.sigma2_xi,
            th.sigma2_beta,
            th.sigma2_eta,
            th.rho_xi,
            th.rho_beta,
            th.rho_eta,
            th.rho_z,
        ];
        text.push_str(&(t + 1).to_string());
        for v in values {
            text.push(',');
            text.push_str(&format_value(v, digits));
        }
        text.push('\n');
    }
    let path = dir.join("replicates_theta.csv");
    write_text(&path, &text)?;
    written.push(path);

    let mut text = String::from("replicate,site_id,type,xi,tau_y,row_variance\n");
    for (t, d) in details.iter().enumerate() {
        for (j, &row) in d.rows.iter().enumerate() {
            let r = &obs.rows[row];
            let _ = writeln!(
                text,
                "{},{},{},{},{},{}",
                t + 1,
                obs.sites[r.site].id,
                r.kind + 1,
                format_value(d.xi[j], digits),
                format_value(d.tau_y[j], digits),
                format_value(d.row_variance[j], digits)
            );
        }
    }
    let path = dir.join("replicates_subset.csv");
    write_text(&path, &text)?;
    written.push(path);
    Ok(written)
}

/// Writes the score table with columns `type,mspe,mse,hove,pmcc,crps,waic`.
pub fn write_scores(per_type: &[TypeScores], pooled: &TypeScores, path: &Path) -> Result<()> {
    let digits = output_precision();
    let mut text = String::from("type,mspe,mse,hove,pmcc,crps,waic\n");
    let labelled = per_type
        .iter()
        .enumerate()
        .map(|(k, s)| ((k + 1).to_string(), s))
        .chain(std::iter::once(("pooled".to_string(), pooled)));
    for (label, s) in labelled {
        let _ = writeln!(
            text,
            "{label},{},{},{},{},{},{}",
            opt(s.mspe, digits),
            opt(s.mse, digits),
            opt(s.hove, digits),
            opt(s.pmcc, digits),
            opt(s.crps, digits),
            opt(s.waic, digits)
        );
    }
    write_text(path, &text)
}

/// A table read back as header plus string rows.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = reader(path)?;
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| Ok(r?.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Table { headers, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Parses a numeric cell; `NA` reads as `None`.
    pub fn number(&self, row: usize, col: usize, path: &Path) -> Result<Option<f64>> {
        let raw = &self.rows[row][col];
        if raw == "NA" {
            return Ok(None);
        }
        raw.parse()
            .map(Some)
            .map_err(|_| parse_err(path, row + 2, format!("bad number `{raw}`")))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Fit inputs and run parameters, enough to rerun a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub data: PathBuf,
    pub covariates: PathBuf,
    pub reps: usize,
    pub subset_size: usize,
    /// `srs` or `all`.
    pub mode: String,
    pub store_replicates: bool,
}

/// Record of one command: enough to rerun it and check its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    pub seed: Option<u64>,
    pub config: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunRecord>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings_seconds: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            config: None,
            run: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_seconds: BTreeMap::new(),
        }
    }

    pub fn add_inputs(&mut self, paths: &[&Path]) -> Result<()> {
        for p in paths {
            self.inputs.push(FileDigest::of(p)?);
        }
        Ok(())
    }

    pub fn add_outputs(&mut self, paths: &[PathBuf]) -> Result<()> {
        for p in paths {
            self.outputs.push(FileDigest::of(p)?);
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_text(path, &(text + "\n"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }
}

//! The replicate loop: subset, hyperparameters, pseudo-data, projection; then
//! per-row posterior summaries and in-sample/holdout scoring terms.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::draws::{
    self, draw_gaussian_blocks, draw_predictive, draw_pseudo_datum, draw_shape, draw_theta,
    log_density, PseudoDatum, RngStream, RowContext, ThetaDraw, MAX_RESAMPLES, SCORING_STREAMS,
};
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{
    build_design, validate_dataset, DesignMatrices, DesignSpec, FamilyKind, HyperpriorConfig,
    ObservationSet,
};
use crate::projection::{solve_stacked, StackedDraw};
use crate::subset::{draw_subset, gather_subset, SubsetData, SubsetMode};

const ROW_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub reps: usize,
    pub subset_size: usize,
    pub mode: SubsetMode,
    pub seed: u64,
    pub families: Vec<FamilyKind>,
    pub design: DesignSpec,
    pub priors: HyperpriorConfig,
    pub store_replicates: bool,
    pub quantiles: Vec<f64>,
    /// Summaries are reported for every `stride`-th row plus all holdout rows.
    pub prediction_stride: usize,
    /// Compute HOVE/PMCC/CRPS/WAIC terms during the fit.
    pub score: bool,
}

impl FitConfig {
    pub fn new(families: Vec<FamilyKind>, design: DesignSpec) -> Self {
        FitConfig {
            reps: 1000,
            subset_size: 0,
            mode: SubsetMode::All,
            seed: 0,
            families,
            design,
            priors: HyperpriorConfig::default(),
            store_replicates: false,
            quantiles: vec![0.025, 0.5, 0.975],
            prediction_stride: 1,
            score: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("replicate count must be at least 1".into()));
        }
        if self.prediction_stride == 0 {
            return Err(Error::Config("prediction stride must be at least 1".into()));
        }
        if let Some(q) = self.quantiles.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::Config(format!("quantile {q} outside (0, 1)")));
        }
        self.priors.validate()
    }
}

/// Heavy per-replicate output, kept only on request.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateDetail {
    pub sites: Vec<usize>,
    /// Observation row of each subset row.
    pub rows: Vec<usize>,
    pub xi: DVector<f64>,
    pub tau_y: DVector<f64>,
    pub row_variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowSummary {
    /// Observation row index.
    pub row: usize,
    pub mean: f64,
    pub sd: f64,
    pub quantiles: Vec<f64>,
}

/// Latent summary plus the shape-normalized mean used for Weibull rows
/// (posterior mean of `Y / ρ_z`, i.e. minus the log scale); equals `mean`
/// for other families.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSummary {
    pub summary: RowSummary,
    pub log_scale_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSummary {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CoefficientSummary {
    /// The equal-tailed 95% interval excludes zero.
    pub fn excludes_zero(&self) -> bool {
        self.lower > 0.0 || self.upper < 0.0
    }
}

/// Sums of per-row scoring terms for one type.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScoreTotals {
    pub holdout_rows: usize,
    pub hove: f64,
    pub pmcc: f64,
    pub crps: f64,
    pub training_rows: usize,
    pub lppd: f64,
    pub p_waic: f64,
}

impl ScoreTotals {
    fn add(&mut self, other: &ScoreTotals) {
        self.holdout_rows += other.holdout_rows;
        self.hove += other.hove;
        self.pmcc += other.pmcc;
        self.crps += other.crps;
        self.training_rows += other.training_rows;
        self.lppd += other.lppd;
        self.p_waic += other.p_waic;
    }

    pub fn hove_mean(&self) -> Option<f64> {
        (self.holdout_rows > 0).then(|| self.hove / self.holdout_rows as f64)
    }

    pub fn pmcc_mean(&self) -> Option<f64> {
        (self.holdout_rows > 0).then(|| self.pmcc / self.holdout_rows as f64)
    }

    pub fn crps_mean(&self) -> Option<f64> {
        (self.holdout_rows > 0).then(|| self.crps / self.holdout_rows as f64)
    }

    pub fn waic(&self) -> Option<f64> {
        (self.training_rows > 0)
            .then(|| -2.0 * (self.lppd - self.p_waic) / self.training_rows as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub total: Duration,
    pub setup: Duration,
    /// Summed over replicates (CPU time across threads).
    pub gather: Duration,
    pub draw: Duration,
    pub solve: Duration,
    /// Wall time of the replicate loop.
    pub replicates: Duration,
    pub summarize: Duration,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub p: usize,
    pub r: usize,
    pub labels: Vec<String>,
    /// `(p + r) × T`, one column per replicate.
    pub coefficients: DMatrix<f64>,
    /// Global hyperparameters of each replicate.
    pub theta: Vec<ThetaDraw>,
    pub details: Option<Vec<ReplicateDetail>>,
    pub latent: Vec<LatentSummary>,
    pub response: Vec<RowSummary>,
    pub coefficient_summary: Vec<CoefficientSummary>,
    /// Per type; empty when scoring is off.
    pub scores: Vec<ScoreTotals>,
    pub quantiles: Vec<f64>,
    pub subset_size: usize,
    pub timings: Timings,
}

impl FitResult {
    pub fn reps(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn beta(&self, t: usize) -> DVector<f64> {
        self.coefficients.view((0, t), (self.p, 1)).column(0).into_owned()
    }

    pub fn eta(&self, t: usize) -> DVector<f64> {
        self.coefficients.view((self.p, t), (self.r, 1)).column(0).into_owned()
    }

    pub fn pooled_scores(&self) -> ScoreTotals {
        let mut total = ScoreTotals::default();
        for s in &self.scores {
            total.add(s);
        }
        total
    }
}

/// `exp(−Y/ρ) Γ(1 + 1/ρ)`, the mean of the rate-form Weibull; evaluated in log space.
pub fn weibull_mean_transform(y: f64, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Numeric(format!("weibull shape {rho} is not positive")));
    }
    let v = (-y / rho + ln_gamma(1.0 + 1.0 / rho)).exp();
    if !v.is_finite() {
        return Err(Error::Numeric(format!(
            "weibull mean overflows at latent {y}, shape {rho}"
        )));
    }
    Ok(v)
}

/// Mean of the response given latent `y`.
pub fn response_mean(family: &FamilyKind, y: f64, ctx: &RowContext) -> Result<f64> {
    let v = match family {
        FamilyKind::LogitBeta { .. } | FamilyKind::Gaussian => y,
        FamilyKind::Weibull => return weibull_mean_transform(y, ctx.shape),
        FamilyKind::Poisson { .. } => y.exp(),
        FamilyKind::Binomial { .. } => ctx.trials as f64 * draws::expit(y),
    };
    if !v.is_finite() {
        return Err(Error::Numeric(format!(
            "{} response mean overflows at latent {y}",
            family.name()
        )));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionScale {
    Latent,
    ResponseMean,
}

struct ReplicateOutput {
    coefficients: DVector<f64>,
    theta: ThetaDraw,
    detail: Option<ReplicateDetail>,
    gather: Duration,
    draw: Duration,
    solve: Duration,
}

struct Context<'a> {
    obs: &'a ObservationSet,
    mats: &'a DesignMatrices,
    cfg: &'a FitConfig,
    frame: Vec<usize>,
    fixed_subset: Option<SubsetData>,
}

impl Context<'_> {
    fn replicate(&self, t: usize) -> Result<ReplicateOutput> {
        let mut rng = RngStream::new(self.cfg.seed, t as u64);
        let started = Instant::now();
        let subset = draw_subset(&self.frame, self.cfg.subset_size, self.cfg.mode, &mut rng)?;
        let gathered;
        let data = match &self.fixed_subset {
            Some(data) => data,
            None => {
                gathered = gather_subset(self.obs, self.mats, &subset)?;
                &gathered
            }
        };
        let gather = started.elapsed();

        let started = Instant::now();
        let kinds: Vec<&FamilyKind> = data
            .rows
            .iter()
            .map(|&i| &self.cfg.families[self.obs.rows[i].kind])
            .collect();
        let needs: Vec<bool> = kinds.iter().map(|f| f.uses_row_variance()).collect();
        let mut theta = draw_theta(&self.cfg.priors, &needs, &mut rng)?;
        let y_rep = self.pseudo_data(data, &kinds, &mut theta, &mut rng, t)?;
        let p = self.mats.p;
        let r = self.mats.r;
        let (w_beta, w_eta, w_xi) = draw_gaussian_blocks(&theta, p, r, data.rows.len(), &mut rng);
        let draw = started.elapsed();

        let started = Instant::now();
        let stacked = StackedDraw {
            y_rep,
            w_beta,
            w_eta,
            w_xi,
            sigma_xi: theta.sigma2_xi.sqrt(),
        };
        let sol = solve_stacked(&data.m, p, &stacked)
            .map_err(|e| Error::Numeric(format!("replicate {}: {e}", t + 1)))?;
        let solve = started.elapsed();

        let mut coefficients = DVector::zeros(p + r);
        coefficients.rows_mut(0, p).copy_from(&sol.beta);
        coefficients.rows_mut(p, r).copy_from(&sol.eta);
        let detail = self.cfg.store_replicates.then(|| ReplicateDetail {
            sites: subset.sites,
            rows: data.rows.clone(),
            xi: sol.xi,
            tau_y: sol.tau_y,
            row_variance: theta.row_variance.clone(),
        });
        Ok(ReplicateOutput {
            coefficients,
            theta: theta.global(),
            detail,
            gather,
            draw,
            solve,
        })
    }

    fn pseudo_data(
        &self,
        data: &SubsetData,
        kinds: &[&FamilyKind],
        theta: &mut ThetaDraw,
        rng: &mut RngStream,
        t: usize,
    ) -> Result<DVector<f64>> {
        let mut y_rep = DVector::zeros(data.rows.len());
        'attempt: for _ in 0..MAX_RESAMPLES {
            for (j, &row) in data.rows.iter().enumerate() {
                let obs_row = &self.obs.rows[row];
                let ctx = RowContext {
                    variance: theta.row_variance[j],
                    shape: theta.rho_z,
                    trials: obs_row.trials,
                };
                match draw_pseudo_datum(kinds[j], obs_row.value, &ctx, rng)? {
                    PseudoDatum::Value(v) => y_rep[j] = v,
                    PseudoDatum::ShapeOverflow => {
                        theta.rho_z = draw_shape(&self.cfg.priors, rng)?;
                        continue 'attempt;
                    }
                }
            }
            return Ok(y_rep);
        }
        Err(Error::Numeric(format!(
            "replicate {}: weibull shape overflowed {MAX_RESAMPLES} times",
            t + 1
        )))
    }
}

/// Runs the full sampler.
pub fn run_fit(obs: &ObservationSet, cfg: &FitConfig) -> Result<FitResult> {
    let started = Instant::now();
    cfg.validate()?;
    let violations = validate_dataset(obs, &cfg.design, &cfg.families);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    let mats = build_design(obs, &cfg.design)?;
    let frame = obs.training_sites();
    if frame.is_empty() {
        return Err(Error::Config("no training sites".into()));
    }
    let subset_size = match cfg.mode {
        SubsetMode::All => frame.len(),
        SubsetMode::Srs => cfg.subset_size,
    };
    if subset_size == 0 || subset_size > frame.len() {
        return Err(Error::Config(format!(
            "subset size {subset_size} outside 1..={} training sites",
            frame.len()
        )));
    }
    let fixed_subset = if subset_size == frame.len() {
        let all = draw_subset(&frame, frame.len(), SubsetMode::All, &mut RngStream::new(0, 0))?;
        Some(gather_subset(obs, &mats, &all)?)
    } else {
        None
    };
    let ctx = Context {
        obs,
        mats: &mats,
        cfg: &FitConfig {
            subset_size,
            ..cfg.clone()
        },
        frame,
        fixed_subset,
    };
    let setup = started.elapsed();

    let loop_started = Instant::now();
    let outputs: Vec<ReplicateOutput> = (0..cfg.reps)
        .into_par_iter()
        .map(|t| ctx.replicate(t))
        .collect::<Result<_>>()?;
    let replicates = loop_started.elapsed();

    let q = mats.p + mats.r;
    let mut coefficients = DMatrix::zeros(q, cfg.reps);
    let mut theta = Vec::with_capacity(cfg.reps);
    let mut details = cfg.store_replicates.then(|| Vec::with_capacity(cfg.reps));
    let mut timings = Timings {
        setup,
        replicates,
        ..Timings::default()
    };
    for (t, out) in outputs.into_iter().enumerate() {
        coefficients.set_column(t, &out.coefficients);
        theta.push(out.theta);
        if let (Some(all), Some(detail)) = (details.as_mut(), out.detail) {
            all.push(detail);
        }
        timings.gather += out.gather;
        timings.draw += out.draw;
        timings.solve += out.solve;
    }

    let summarize_started = Instant::now();
    let evaluator = Evaluator {
        obs,
        mats: &mats,
        families: &cfg.families,
        coefficients: &coefficients,
        theta: &theta,
        quantiles: &cfg.quantiles,
        priors: &cfg.priors,
        seed: cfg.seed,
    };
    let report: Vec<usize> = (0..obs.rows.len())
        .filter(|&i| i % cfg.prediction_stride == 0 || obs.holdout[obs.rows[i].site])
        .collect();
    let eval_rows: Vec<usize> = if cfg.score {
        (0..obs.rows.len()).collect()
    } else {
        report.clone()
    };
    let evaluations = evaluator.evaluate(&eval_rows, cfg.score)?;
    let mut latent = Vec::with_capacity(report.len());
    let mut response = Vec::with_capacity(report.len());
    let mut scores = if cfg.score {
        vec![ScoreTotals::default(); obs.num_types]
    } else {
        Vec::new()
    };
    let mut next_report = report.iter().peekable();
    for ev in evaluations {
        if let Some(s) = scores.get_mut(obs.rows[ev.latent.summary.row].kind) {
            s.add(&ev.score);
        }
        if next_report.peek() == Some(&&ev.latent.summary.row) {
            next_report.next();
            latent.push(ev.latent);
            response.push(ev.response);
        }
    }
    let labels = cfg.design.coefficient_labels();
    let coefficient_summary = summarize_coefficients(&coefficients, &labels);
    timings.summarize = summarize_started.elapsed();
    timings.total = started.elapsed();

    Ok(FitResult {
        p: mats.p,
        r: mats.r,
        labels,
        coefficients,
        theta,
        details,
        latent,
        response,
        coefficient_summary,
        scores,
        quantiles: cfg.quantiles.clone(),
        subset_size,
        timings,
    })
}

fn summarize_coefficients(coefficients: &DMatrix<f64>, labels: &[String]) -> Vec<CoefficientSummary> {
    (0..coefficients.nrows())
        .map(|j| {
            let values: Vec<f64> = coefficients.row(j).iter().copied().collect();
            let s = summarize(j, &values, &[0.025, 0.975]);
            CoefficientSummary {
                label: labels[j].clone(),
                mean: s.mean,
                sd: s.sd,
                lower: s.quantiles[0],
                upper: s.quantiles[1],
            }
        })
        .collect()
}

fn summarize(row: usize, values: &[f64], quantiles: &[f64]) -> RowSummary {
    let mean = metrics::mean(values);
    let sd = metrics::sample_variance(values).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    RowSummary {
        row,
        mean,
        sd,
        quantiles: quantiles
            .iter()
            .map(|&q| metrics::quantile_sorted(&sorted, q))
            .collect(),
    }
}

struct RowEvaluation {
    latent: LatentSummary,
    response: RowSummary,
    score: ScoreTotals,
}

struct Evaluator<'a> {
    obs: &'a ObservationSet,
    mats: &'a DesignMatrices,
    families: &'a [FamilyKind],
    coefficients: &'a DMatrix<f64>,
    theta: &'a [ThetaDraw],
    quantiles: &'a [f64],
    priors: &'a HyperpriorConfig,
    seed: u64,
}

impl Evaluator<'_> {
    fn evaluate(&self, rows: &[usize], score: bool) -> Result<Vec<RowEvaluation>> {
        let chunks: Vec<Vec<RowEvaluation>> = rows
            .par_chunks(ROW_CHUNK)
            .map(|chunk| {
                let design = self.mats.f.select_rows(chunk.iter());
                let latent = design * self.coefficients;
                chunk
                    .iter()
                    .enumerate()
                    .map(|(i, &row)| {
                        let values: Vec<f64> = latent.row(i).iter().copied().collect();
                        self.evaluate_row(row, &values, score)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    fn evaluate_row(&self, row: usize, latent: &[f64], score: bool) -> Result<RowEvaluation> {
        let obs_row = &self.obs.rows[row];
        let family = &self.families[obs_row.kind];
        let context = |t: usize| RowContext {
            variance: 1.0,
            shape: self.theta[t].rho_z,
            trials: obs_row.trials,
        };
        let means: Vec<f64> = latent
            .iter()
            .enumerate()
            .map(|(t, &y)| response_mean(family, y, &context(t)))
            .collect::<Result<_>>()?;
        let log_scale_mean = match family {
            FamilyKind::Weibull => {
                latent
                    .iter()
                    .zip(self.theta)
                    .map(|(y, th)| y / th.rho_z)
                    .sum::<f64>()
                    / latent.len() as f64
            }
            _ => metrics::mean(latent),
        };
        let latent_summary = LatentSummary {
            summary: summarize(row, latent, self.quantiles),
            log_scale_mean,
        };
        let response = summarize(row, &means, self.quantiles);

        let mut totals = ScoreTotals::default();
        if score {
            let mut rng = RngStream::new(self.seed, SCORING_STREAMS + row as u64);
            let row_ctx = |t: usize, rng: &mut RngStream| -> Result<RowContext> {
                let mut ctx = context(t);
                if family.uses_row_variance() {
                    ctx.variance = draws::draw_row_variance(self.priors, rng)?;
                }
                Ok(ctx)
            };
            let z = obs_row.value;
            if self.obs.holdout[obs_row.site] {
                let mut predictive = Vec::with_capacity(latent.len());
                for (t, &y) in latent.iter().enumerate() {
                    let ctx = row_ctx(t, &mut rng)?;
                    predictive.push(
                        draw_predictive(family, y, &ctx, &mut rng)
                            .map_err(|e| Error::Numeric(format!("replicate {}: {e}", t + 1)))?,
                    );
                }
                totals.holdout_rows = 1;
                totals.hove = (z - response.mean).powi(2);
                totals.pmcc = metrics::pmcc_row(z, &predictive);
                totals.crps = metrics::crps_empirical(z, &predictive);
            } else {
                let mut densities = Vec::with_capacity(latent.len());
                for (t, &y) in latent.iter().enumerate() {
                    let ctx = row_ctx(t, &mut rng)?;
                    densities.push(log_density(family, z, y, &ctx)?);
                }
                let term = metrics::waic_row(&densities)?;
                totals.training_rows = 1;
                totals.lppd = term.lppd;
                totals.p_waic = term.p_waic;
            }
        }
        Ok(RowEvaluation {
            latent: latent_summary,
            response,
            score: totals,
        })
    }
}

/// Recomputes per-row summaries from the retained coefficient draws.
pub fn predict(
    fit: &FitResult,
    obs: &ObservationSet,
    cfg: &FitConfig,
    which: PredictionScale,
) -> Result<Vec<RowSummary>> {
    let mats = build_design(obs, &cfg.design)?;
    let evaluator = Evaluator {
        obs,
        mats: &mats,
        families: &cfg.families,
        coefficients: &fit.coefficients,
        theta: &fit.theta,
        quantiles: &fit.quantiles,
        priors: &cfg.priors,
        seed: cfg.seed,
    };
    let rows: Vec<usize> = fit.latent.iter().map(|l| l.summary.row).collect();
    let evaluations = evaluator.evaluate(&rows, false)?;
    Ok(evaluations
        .into_iter()
        .map(|ev| match which {
            PredictionScale::Latent => ev.latent.summary,
            PredictionScale::ResponseMean => ev.response,
        })
        .collect())
}

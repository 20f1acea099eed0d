//! Synthetic studies: the bivariate logistic/Weibull study and the univariate
//! Gaussian, Poisson and Bernoulli studies, all on sites `1..=M` of a line.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Exp1, Normal, Poisson};

use crate::basis::{self, BasisBlock, BasisKind, BasisScope, DistanceMetric};
use crate::draws::{expit, RngStream, SIMULATION_STREAMS};
use crate::error::{Error, Result};
use crate::io::ModelConfig;
use crate::metrics::Truth;
use crate::model::{ObservationSet, Row, Site};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    /// Logistic type 1, exponential (Weibull shape 1) type 2 with type 1 as a covariate.
    Bivariate,
    Gaussian,
    Poisson,
    Bernoulli,
}

impl Study {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "biv" | "bivariate" => Ok(Study::Bivariate),
            "gauss" | "gaussian" => Ok(Study::Gaussian),
            "pois" | "poisson" => Ok(Study::Poisson),
            "bern" | "bernoulli" => Ok(Study::Bernoulli),
            _ => Err(Error::Config(format!(
                "unknown study `{name}` (expected biv, gauss, pois or bern)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub study: Study,
    pub m: usize,
    pub observe_frac: f64,
    /// Knots per fitted block; `None` uses the generating count.
    pub fit_knots: Option<usize>,
    pub seed: u64,
}

impl StudySpec {
    pub fn new(study: Study, m: usize, seed: u64) -> Self {
        StudySpec {
            study,
            m,
            observe_frac: 0.8,
            fit_knots: None,
            seed,
        }
    }

    /// Fits with 25 knots per block against data generated with 15.
    pub fn misspecified(mut self) -> Self {
        self.fit_knots = Some(25);
        self
    }

    fn true_knots(&self) -> usize {
        match self.study {
            Study::Bivariate => 15,
            _ => 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedStudy {
    pub obs: ObservationSet,
    pub truth: Truth,
    /// Model configuration for fitting the study.
    pub config: ModelConfig,
}

fn rbf_block(m: usize, count: usize, scope: BasisScope) -> BasisBlock {
    let lo = 1.0;
    let hi = m as f64;
    BasisBlock {
        kind: BasisKind::GaussianRbf,
        knots: basis::make_knots_1d(lo, hi, count).into_iter().map(|c| vec![c]).collect(),
        bandwidth: if count > 1 { (hi - lo) / (count - 1) as f64 } else { hi - lo },
        scope,
    }
}

fn normal_vec<R: Rng>(len: usize, mean: f64, var: f64, rng: &mut R) -> Vec<f64> {
    let dist = Normal::new(mean, var.sqrt()).expect("positive variance");
    (0..len).map(|_| dist.sample(rng)).collect()
}

fn dot(g: &nalgebra::DMatrix<f64>, row: usize, offset: usize, coef: &[f64]) -> f64 {
    coef.iter()
        .enumerate()
        .map(|(j, c)| g[(row, offset + j)] * c)
        .sum()
}

/// Generates a study; the same spec always yields the same dataset.
pub fn generate(spec: &StudySpec) -> Result<SimulatedStudy> {
    let knots = spec.true_knots();
    if spec.m < knots {
        return Err(Error::Config(format!(
            "domain size {} is smaller than the {knots} generating knots",
            spec.m
        )));
    }
    if !(spec.observe_frac > 0.0 && spec.observe_frac < 1.0) {
        return Err(Error::Config(format!(
            "observed fraction {} outside (0, 1)",
            spec.observe_frac
        )));
    }
    let m = spec.m;
    let mut rng = RngStream::new(spec.seed, SIMULATION_STREAMS);
    let coords: Vec<Vec<f64>> = (1..=m).map(|s| vec![s as f64]).collect();
    let mut covariates = Vec::with_capacity(m);
    for s in 1..=m {
        let t = s as f64 / m as f64;
        let x1 = rng.sample(Bernoulli::new(expit(t)).expect("probability")) as u8 as f64;
        let x2 = rng.sample(Bernoulli::new(expit(-0.01 * t)).expect("probability")) as u8 as f64;
        covariates.push(vec![x1, x2]);
    }

    let (rows, truth) = match spec.study {
        Study::Bivariate => bivariate(m, &coords, &covariates, &mut rng),
        other => univariate(other, m, &coords, &covariates, &mut rng),
    };

    let held = m - (spec.observe_frac * m as f64).round() as usize;
    let mut holdout = vec![false; m];
    for i in index::sample(&mut rng, m, held) {
        holdout[i] = true;
    }
    let sites = (0..m)
        .map(|i| Site {
            id: (i + 1) as u64,
            coords: coords[i].clone(),
        })
        .collect();
    let num_types = if spec.study == Study::Bivariate { 2 } else { 1 };
    let obs = ObservationSet::new(
        sites,
        holdout,
        rows,
        num_types,
        vec!["x1".into(), "x2".into()],
        covariates,
    )?;
    let fit_knots = spec.fit_knots.unwrap_or(knots);
    let config = ModelConfig::for_study(spec.study, fit_knots, [1.0, m as f64]);
    Ok(SimulatedStudy { obs, truth, config })
}

fn bivariate(
    m: usize,
    coords: &[Vec<f64>],
    covariates: &[Vec<f64>],
    rng: &mut RngStream,
) -> (Vec<Row>, Truth) {
    // all three blocks share knots and bandwidth, so one evaluation serves them
    let block = rbf_block(m, 15, BasisScope::Shared);
    let g = basis::build_basis_matrix(coords, std::slice::from_ref(&block), 1, DistanceMetric::Planar);
    let eta1 = normal_vec(15, 0.0, 0.81, rng);
    let eta2 = normal_vec(15, 0.0, 0.04, rng);
    let eta_shared = normal_vec(15, 0.0, 0.81, rng);
    let xi1 = normal_vec(m, 0.0, 0.15, rng);
    let xi2 = normal_vec(m, 0.0, 0.08, rng);
    let beta = vec![1.0, -2.0, -2.0, -0.7, -1.5, -1.0, -0.25];

    let mut rows = Vec::with_capacity(2 * m);
    let mut latent1 = Vec::with_capacity(m);
    let mut latent2 = Vec::with_capacity(m);
    let mut z1 = Vec::with_capacity(m);
    let mut z2 = Vec::with_capacity(m);
    for i in 0..m {
        let (x1, x2) = (covariates[i][0], covariates[i][1]);
        let shared = dot(&g, i, 0, &eta_shared);
        let y1 = beta[0] + beta[1] * x1 + beta[2] * x2 + dot(&g, i, 0, &eta1) + shared + xi1[i];
        let (a, b): (f64, f64) = (rng.sample(Exp1), rng.sample(Exp1));
        let logistic = (a / b).ln();
        let z = y1 + 0.6 * logistic;
        let y2 = beta[3] + beta[4] * x1 + beta[5] * x2 + beta[6] * z
            + dot(&g, i, 0, &eta2)
            + shared
            + xi2[i];
        let e: f64 = rng.sample(Exp1);
        latent1.push(y1);
        latent2.push(y2);
        z1.push(z);
        z2.push(e * (-y2).exp());
    }
    for i in 0..m {
        rows.push(Row { site: i, kind: 0, value: z1[i], trials: 1 });
    }
    for i in 0..m {
        rows.push(Row { site: i, kind: 1, value: z2[i], trials: 1 });
    }
    let mut eta = eta1;
    eta.extend(eta2);
    eta.extend(eta_shared);
    latent1.extend(latent2);
    (
        rows,
        Truth {
            latent: latent1,
            beta,
            eta,
        },
    )
}

fn univariate(
    study: Study,
    m: usize,
    coords: &[Vec<f64>],
    covariates: &[Vec<f64>],
    rng: &mut RngStream,
) -> (Vec<Row>, Truth) {
    let block = rbf_block(m, 30, BasisScope::Type(0));
    let g = basis::build_basis_matrix(coords, std::slice::from_ref(&block), 1, DistanceMetric::Planar);
    let (beta, eta_mean, eta_var, xi_var) = match study {
        Study::Gaussian => (vec![2.5, -0.5, -2.0], 0.0, 0.81, 0.07),
        Study::Poisson => (vec![-1.0, -0.4, -1.2], 0.2, 0.04, 0.01),
        _ => (vec![-5.0, 1.0, -1.0], 0.2, 0.04, 0.01),
    };
    let eta = normal_vec(30, eta_mean, eta_var, rng);
    let xi = normal_vec(m, 0.0, xi_var, rng);
    let noise = Normal::new(0.0, 0.5).expect("positive sd");
    let mut rows = Vec::with_capacity(m);
    let mut latent = Vec::with_capacity(m);
    for i in 0..m {
        let (x1, x2) = (covariates[i][0], covariates[i][1]);
        let y = beta[0] + beta[1] * x1 + beta[2] * x2 + dot(&g, i, 0, &eta) + xi[i];
        let z = match study {
            Study::Gaussian => y + noise.sample(rng),
            Study::Poisson => Poisson::new(y.exp()).expect("finite rate").sample(rng),
            _ => rng.sample(Bernoulli::new(expit(y)).expect("probability")) as u8 as f64,
        };
        latent.push(y);
        rows.push(Row { site: i, kind: 0, value: z, trials: 1 });
    }
    (rows, Truth { latent, beta, eta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_design;

    #[test]
    fn bivariate_layout() {
        let study = generate(&StudySpec::new(Study::Bivariate, 1000, 7)).unwrap();
        assert_eq!(study.obs.rows.len(), 2000);
        assert_eq!(study.obs.training_sites().len(), 800);
        assert_eq!(study.truth.beta.len(), 7);
        assert_eq!(study.truth.eta.len(), 45);
        assert!(study.obs.rows[1000..].iter().all(|r| r.value > 0.0));
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate(&StudySpec::new(Study::Poisson, 300, 3)).unwrap();
        let b = generate(&StudySpec::new(Study::Poisson, 300, 3)).unwrap();
        let c = generate(&StudySpec::new(Study::Poisson, 300, 4)).unwrap();
        assert_eq!(a.obs, b.obs);
        assert_eq!(a.truth, b.truth);
        assert_ne!(a.obs, c.obs);
    }

    #[test]
    fn truth_recomposes_from_pieces() {
        // latent minus fixed and basis parts leaves the fine-scale term, whose
        // spread must match its generating variance loosely
        let study = generate(&StudySpec::new(Study::Gaussian, 2000, 11)).unwrap();
        let (families, design) = study.config.resolve(&study.obs).unwrap();
        assert_eq!(families.len(), 1);
        let mats = build_design(&study.obs, &design).unwrap();
        let coef: Vec<f64> = study.truth.beta.iter().chain(&study.truth.eta).copied().collect();
        let resid: Vec<f64> = (0..study.obs.rows.len())
            .map(|i| {
                let fitted: f64 = mats.f.row(i).iter().zip(&coef).map(|(a, b)| a * b).sum();
                study.truth.latent[i] - fitted
            })
            .collect();
        let var = crate::metrics::sample_variance(&resid);
        assert!((var - 0.07).abs() < 0.01, "{var}");
    }

    #[test]
    fn misspecified_fit_uses_wider_basis() {
        let study = generate(&StudySpec::new(Study::Bivariate, 500, 1).misspecified()).unwrap();
        let (_, design) = study.config.resolve(&study.obs).unwrap();
        assert_eq!(design.r(), 75);
        assert_eq!(design.p(), 7);
    }

    #[test]
    fn rejects_tiny_domain() {
        assert!(generate(&StudySpec::new(Study::Gaussian, 10, 1)).is_err());
    }
}

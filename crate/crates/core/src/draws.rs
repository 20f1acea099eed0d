//! Random generation: hyperparameter draws, pseudo-data, Gaussian blocks and predictive draws.

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1, Gamma, Poisson, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{FamilyKind, HyperpriorConfig};

/// Consecutive non-finite draws tolerated before giving up.
pub const MAX_RESAMPLES: usize = 100;

/// Stream ids at or above this value are reserved for scoring draws.
pub const SCORING_STREAMS: u64 = 1 << 62;
/// Stream ids at or above this value (and below [`SCORING_STREAMS`]) belong to data generation.
pub const SIMULATION_STREAMS: u64 = 1 << 61;

/// A reproducible random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// One draw of every hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaDraw {
    pub sigma2_xi: f64,
    pub sigma2_beta: f64,
    pub sigma2_eta: f64,
    pub rho_xi: f64,
    pub rho_beta: f64,
    pub rho_eta: f64,
    /// Weibull shape.
    pub rho_z: f64,
    /// Per subset row; rows whose family has no row variance hold 1.0.
    pub row_variance: Vec<f64>,
}

impl ThetaDraw {
    /// The draw with per-row variances dropped, as kept for every replicate.
    pub fn global(&self) -> ThetaDraw {
        ThetaDraw {
            row_variance: Vec::new(),
            ..self.clone()
        }
    }
}

/// Parameters a single row's density depends on besides its latent value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowContext {
    pub variance: f64,
    pub shape: f64,
    pub trials: u32,
}

impl Default for RowContext {
    fn default() -> Self {
        RowContext {
            variance: 1.0,
            shape: 1.0,
            trials: 0,
        }
    }
}

fn retry_positive<R: Rng + ?Sized>(
    label: &str,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> f64,
) -> Result<f64> {
    for _ in 0..MAX_RESAMPLES {
        let v = draw(rng);
        if v.is_finite() && v > 0.0 {
            return Ok(v);
        }
    }
    Err(Error::Numeric(format!(
        "{label}: {MAX_RESAMPLES} consecutive non-finite draws"
    )))
}

pub fn gamma_unit<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0)
        .expect("gamma shape validated positive")
        .sample(rng)
}

/// `Gamma(shape, rate)` via a unit-scale draw.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    gamma_unit(shape, rng) / rate
}

/// `IG(shape, scale)`, i.e. `scale / Gamma(shape, 1)`.
pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    scale / gamma_unit(shape, rng)
}

/// `logit(B)` for `B ~ Beta(a, b)`, computed as a difference of log-gamma variates.
pub fn sample_logit_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    gamma_unit(a, rng).ln() - gamma_unit(b, rng).ln()
}

/// Draws the Weibull shape from its prior.
pub fn draw_shape<R: Rng + ?Sized>(cfg: &HyperpriorConfig, rng: &mut R) -> Result<f64> {
    retry_positive("weibull shape prior", rng, |r| {
        sample_inv_gamma(cfg.shape_z_shape, cfg.shape_z_scale, r)
    })
}

/// Draws a row variance from its prior.
pub fn draw_row_variance<R: Rng + ?Sized>(cfg: &HyperpriorConfig, rng: &mut R) -> Result<f64> {
    retry_positive("row variance prior", rng, |r| {
        sample_inv_gamma(cfg.row_variance_shape, cfg.row_variance_scale, r)
    })
}

/// Draws θ from the prior; `needs_variance[i]` marks subset rows that get a row variance.
pub fn draw_theta<R: Rng + ?Sized>(
    cfg: &HyperpriorConfig,
    needs_variance: &[bool],
    rng: &mut R,
) -> Result<ThetaDraw> {
    let block = |name: &str, rng: &mut R| -> Result<(f64, f64)> {
        let rho = retry_positive(&format!("{name} rate prior"), rng, |r| {
            sample_gamma(cfg.rho_shape, cfg.rho_rate, r)
        })?;
        let var = retry_positive(&format!("{name} variance prior"), rng, |r| {
            sample_inv_gamma(cfg.block_variance_shape, rho, r)
        })?;
        Ok((rho, var))
    };
    let (rho_xi, sigma2_xi) = block("fine-scale", rng)?;
    let (rho_beta, sigma2_beta) = block("fixed-effect", rng)?;
    let (rho_eta, sigma2_eta) = block("random-effect", rng)?;
    let rho_z = draw_shape(cfg, rng)?;
    let mut row_variance = Vec::with_capacity(needs_variance.len());
    for &needs in needs_variance {
        row_variance.push(if needs {
            draw_row_variance(cfg, rng)?
        } else {
            1.0
        });
    }
    Ok(ThetaDraw {
        sigma2_xi,
        sigma2_beta,
        sigma2_eta,
        rho_xi,
        rho_beta,
        rho_eta,
        rho_z,
        row_variance,
    })
}

/// Outcome of a pseudo-datum draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PseudoDatum {
    Value(f64),
    /// `z^rho_z` left the finite positive range; the caller must redraw the shape.
    ShapeOverflow,
}

/// Draws one pseudo-data value for response `z`.
pub fn draw_pseudo_datum<R: Rng + ?Sized>(
    family: &FamilyKind,
    z: f64,
    ctx: &RowContext,
    rng: &mut R,
) -> Result<PseudoDatum> {
    if let FamilyKind::Weibull = family {
        let log_rate = ctx.shape * z.ln();
        let rate = log_rate.exp();
        if !(rate.is_finite() && rate > 0.0) {
            return Ok(PseudoDatum::ShapeOverflow);
        }
    }
    for _ in 0..MAX_RESAMPLES {
        let v = match *family {
            FamilyKind::LogitBeta { alpha, kappa } => {
                z + ctx.variance.sqrt() * sample_logit_beta(alpha, kappa - alpha, rng)
            }
            // log of Gamma(1, rate z^rho), kept in log space
            FamilyKind::Weibull => {
                let e: f64 = rng.sample(Exp1);
                e.ln() - ctx.shape * z.ln()
            }
            FamilyKind::Gaussian => {
                let n: f64 = rng.sample(StandardNormal);
                z + ctx.variance.sqrt() * n
            }
            FamilyKind::Poisson { alpha_xi } => gamma_unit(z + alpha_xi, rng).ln(),
            FamilyKind::Binomial { alpha_xi } => {
                sample_logit_beta(z + alpha_xi, ctx.trials as f64 - z + alpha_xi, rng)
            }
        };
        if v.is_finite() {
            return Ok(PseudoDatum::Value(v));
        }
    }
    Err(Error::Numeric(format!(
        "{} pseudo-data: {MAX_RESAMPLES} consecutive non-finite draws for z={z}",
        family.name()
    )))
}

/// Independent Gaussian blocks `(w_beta, w_eta, w_xi)` with the variances in `theta`.
pub fn draw_gaussian_blocks<R: Rng + ?Sized>(
    theta: &ThetaDraw,
    p: usize,
    r: usize,
    kn: usize,
    rng: &mut R,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let mut block = |len: usize, var: f64| {
        let sd = var.sqrt();
        DVector::from_fn(len, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
    };
    let w_beta = block(p, theta.sigma2_beta);
    let w_eta = block(r, theta.sigma2_eta);
    let w_xi = block(kn, theta.sigma2_xi);
    (w_beta, w_eta, w_xi)
}

/// Draws a new response given latent value `y`.
pub fn draw_predictive<R: Rng + ?Sized>(
    family: &FamilyKind,
    y: f64,
    ctx: &RowContext,
    rng: &mut R,
) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::Numeric(format!("latent value {y} is not finite")));
    }
    let z = match *family {
        FamilyKind::LogitBeta { alpha, kappa } => {
            y + ctx.variance.sqrt() * sample_logit_beta(alpha, kappa - alpha, rng)
        }
        FamilyKind::Weibull => {
            let e: f64 = rng.sample(Exp1);
            ((e.ln() - y) / ctx.shape).exp()
        }
        FamilyKind::Gaussian => y + ctx.variance.sqrt() * rng.sample::<f64, _>(StandardNormal),
        FamilyKind::Poisson { .. } => {
            let mean = y.exp();
            if !mean.is_finite() || mean > 1e15 {
                return Err(Error::Numeric(format!("poisson mean exp({y}) overflows")));
            }
            if mean < f64::MIN_POSITIVE {
                0.0
            } else {
                Poisson::new(mean)
                    .map_err(|e| Error::Numeric(format!("poisson mean {mean}: {e}")))?
                    .sample(rng)
            }
        }
        FamilyKind::Binomial { .. } => {
            let prob = expit(y);
            Binomial::new(ctx.trials as u64, prob)
                .map_err(|e| Error::Numeric(format!("binomial p={prob}: {e}")))?
                .sample(rng) as f64
        }
    };
    if !z.is_finite() {
        return Err(Error::Numeric(format!(
            "{} predictive draw overflowed at latent {y}",
            family.name()
        )));
    }
    Ok(z)
}

pub fn expit(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^u)` without overflow.
pub fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Pointwise log density (or log mass) of `z` given latent `y`.
pub fn log_density(family: &FamilyKind, z: f64, y: f64, ctx: &RowContext) -> Result<f64> {
    family
        .check_response(z, ctx.trials)
        .map_err(Error::Numeric)?;
    let v = match *family {
        FamilyKind::LogitBeta { alpha, kappa } => {
            let sigma = ctx.variance.sqrt();
            let u = (z - y) / sigma;
            alpha * u - kappa * softplus(u) - ln_beta(alpha, kappa - alpha) - sigma.ln()
        }
        FamilyKind::Weibull => {
            let rho = ctx.shape;
            rho.ln() + (rho - 1.0) * z.ln() + y - (rho * z.ln() + y).exp()
        }
        FamilyKind::Gaussian => {
            let d = z - y;
            -0.5 * (2.0 * std::f64::consts::PI * ctx.variance).ln() - d * d / (2.0 * ctx.variance)
        }
        FamilyKind::Poisson { .. } => z * y - y.exp() - ln_gamma(z + 1.0),
        FamilyKind::Binomial { .. } => {
            let m = ctx.trials as f64;
            ln_gamma(m + 1.0) - ln_gamma(z + 1.0) - ln_gamma(m - z + 1.0) + z * y
                - m * softplus(y)
        }
    };
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(variance: f64, shape: f64, trials: u32) -> RowContext {
        RowContext {
            variance,
            shape,
            trials,
        }
    }

    #[test]
    fn streams_replay_and_differ() {
        let cfg = HyperpriorConfig::default();
        let mask = [true, false, true];
        let a = draw_theta(&cfg, &mask, &mut RngStream::new(9, 3)).unwrap();
        let b = draw_theta(&cfg, &mask, &mut RngStream::new(9, 3)).unwrap();
        let c = draw_theta(&cfg, &mask, &mut RngStream::new(9, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.row_variance[1], 1.0);
        assert!(a.global().row_variance.is_empty());
    }

    #[test]
    fn empty_blocks() {
        let theta = draw_theta(&HyperpriorConfig::default(), &[], &mut RngStream::new(1, 0)).unwrap();
        let (wb, we, wx) = draw_gaussian_blocks(&theta, 0, 2, 3, &mut RngStream::new(1, 1));
        assert_eq!((wb.len(), we.len(), wx.len()), (0, 2, 3));
    }

    #[test]
    fn blocks_replay() {
        let theta = draw_theta(&HyperpriorConfig::default(), &[], &mut RngStream::new(1, 0)).unwrap();
        let a = draw_gaussian_blocks(&theta, 3, 4, 5, &mut RngStream::new(2, 0));
        let b = draw_gaussian_blocks(&theta, 3, 4, 5, &mut RngStream::new(2, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn weibull_shape_overflow_is_signalled() {
        let out = draw_pseudo_datum(
            &FamilyKind::Weibull,
            1e10,
            &ctx(1.0, 1e5, 0),
            &mut RngStream::new(0, 0),
        )
        .unwrap();
        assert_eq!(out, PseudoDatum::ShapeOverflow);
    }

    #[test]
    fn point_log_densities() {
        let g = log_density(&FamilyKind::Gaussian, 1.3, 1.3, &ctx(1.0, 1.0, 0)).unwrap();
        assert!((g + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
        let p = log_density(&FamilyKind::Poisson { alpha_xi: 0.5 }, 0.0, 0.0, &ctx(1.0, 1.0, 0)).unwrap();
        assert!((p + 1.0).abs() < 1e-14);
        let w = log_density(&FamilyKind::Weibull, 1.0, 0.0, &ctx(1.0, 1.0, 0)).unwrap();
        assert!((w + 1.0).abs() < 1e-14);
        assert!(log_density(&FamilyKind::Weibull, -1.0, 0.0, &ctx(1.0, 1.0, 0)).is_err());
    }

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut acc = 0.5 * (f(lo) + f(hi));
        for i in 1..n {
            acc += f(lo + h * i as f64);
        }
        acc * h
    }

    #[test]
    fn continuous_densities_integrate_to_one() {
        let cases = [
            (FamilyKind::logistic(), 0.0, ctx(1.0, 1.0, 0)),
            (FamilyKind::LogitBeta { alpha: 2.0, kappa: 5.0 }, 1.5, ctx(0.49, 1.0, 0)),
            (FamilyKind::LogitBeta { alpha: 0.7, kappa: 1.1 }, -2.0, ctx(2.0, 1.0, 0)),
            (FamilyKind::Gaussian, 0.5, ctx(0.3, 1.0, 0)),
            (FamilyKind::Gaussian, -3.0, ctx(4.0, 1.0, 0)),
            (FamilyKind::Gaussian, 10.0, ctx(0.01, 1.0, 0)),
        ];
        for (family, y, c) in cases {
            let total = trapezoid(|z| log_density(&family, z, y, &c).unwrap().exp(), y - 200.0, y + 200.0, 400_000);
            assert!((total - 1.0).abs() < 1e-6, "{family:?} y={y}: {total}");
        }
        // Weibull: substitute z = e^t so the integrand stays smooth near zero
        for (y, rho) in [(0.0, 1.0), (1.0, 2.5), (-0.5, 0.6)] {
            let c = ctx(1.0, rho, 0);
            let total = trapezoid(
                |t| {
                    let z = t.exp();
                    (log_density(&FamilyKind::Weibull, z, y, &c).unwrap() + t).exp()
                },
                -60.0,
                8.0,
                400_000,
            );
            assert!((total - 1.0).abs() < 1e-6, "weibull y={y} rho={rho}: {total}");
        }
    }

    #[test]
    fn discrete_masses_sum_to_one() {
        for y in [-2.0, 0.0, 2.5] {
            let c = ctx(1.0, 1.0, 0);
            let total: f64 = (0..400)
                .map(|z| log_density(&FamilyKind::Poisson { alpha_xi: 0.5 }, z as f64, y, &c).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-9);
            for m in [1u32, 7, 30] {
                let c = ctx(1.0, 1.0, m);
                let total: f64 = (0..=m)
                    .map(|z| log_density(&FamilyKind::Binomial { alpha_xi: 0.5 }, z as f64, y, &c).unwrap().exp())
                    .sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn softplus_and_expit_are_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(expit(-1000.0), 0.0);
        assert_eq!(expit(0.0), 0.5);
    }
}

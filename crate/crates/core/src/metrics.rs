//! Prediction and forecast scores, plus the subset-size scan.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::ObservationSet;
use crate::sampler::{run_fit, FitConfig, FitResult, ScoreTotals};
use crate::subset::SubsetMode;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Linear-interpolation quantile of sorted data (the `(n − 1)p` rule).
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `ln(mean(exp(values)))` without overflow.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + (sum / values.len() as f64).ln()
}

fn mean_squared_difference(a: &[f64], b: &[f64], what: &str) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Config(format!(
            "{what}: {} true values but {} estimates",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Config(format!("{what}: nothing to compare")));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// Mean squared difference between true and estimated latent values.
pub fn mspe(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    mean_squared_difference(truth, estimate, "mspe")
}

/// Mean squared error of the stacked coefficient estimates.
pub fn mse_coeffs(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    mean_squared_difference(truth, estimate, "coefficient mse")
}

/// Mean squared error between holdout responses and predictive means.
pub fn hove(z: &[f64], predictive_mean: &[f64]) -> Result<f64> {
    mean_squared_difference(z, predictive_mean, "hove")
}

/// `(z − mean(draws))² + var(draws)` for one row.
pub fn pmcc_row(z: f64, draws: &[f64]) -> f64 {
    let m = mean(draws);
    (z - m) * (z - m) + sample_variance(draws)
}

pub fn pmcc(z: &[f64], draws: &[Vec<f64>]) -> Result<f64> {
    rowwise(z, draws, "pmcc", pmcc_row)
}

/// Sample CRPS `mean|X − z| − ½ mean|X − X'|` over all ordered pairs of draws.
pub fn crps_empirical(z: f64, draws: &[f64]) -> f64 {
    let t = draws.len() as f64;
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let abs_dev = sorted.iter().map(|x| (x - z).abs()).sum::<f64>() / t;
    // sum over i, j of |x_i − x_j| = 2 Σ (2i − T − 1) x_(i), i from 1
    let pair_sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - t - 1.0) * x)
        .sum::<f64>()
        * 2.0;
    (abs_dev - 0.5 * pair_sum / (t * t)).max(0.0)
}

pub fn crps(z: &[f64], draws: &[Vec<f64>]) -> Result<f64> {
    rowwise(z, draws, "crps", crps_empirical)
}

fn rowwise(z: &[f64], draws: &[Vec<f64>], what: &str, f: fn(f64, &[f64]) -> f64) -> Result<f64> {
    if z.len() != draws.len() || z.is_empty() {
        return Err(Error::Config(format!(
            "{what}: {} responses but {} draw sets",
            z.len(),
            draws.len()
        )));
    }
    if draws.iter().any(|d| d.len() < 2) {
        return Err(Error::Config(format!("{what}: needs at least two draws per row")));
    }
    Ok(z.iter().zip(draws).map(|(&zi, d)| f(zi, d)).sum::<f64>() / z.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaicTerm {
    pub lppd: f64,
    pub p_waic: f64,
}

/// Pointwise WAIC contributions of one row from its per-replicate log densities.
pub fn waic_row(log_densities: &[f64]) -> Result<WaicTerm> {
    if log_densities.len() < 2 {
        return Err(Error::Config("waic needs at least two replicates".into()));
    }
    Ok(WaicTerm {
        lppd: log_mean_exp(log_densities),
        p_waic: sample_variance(log_densities),
    })
}

/// `−2 (lppd − p_waic) / rows` from `log_densities[row][replicate]`.
pub fn waic(log_densities: &[Vec<f64>]) -> Result<f64> {
    if log_densities.is_empty() {
        return Err(Error::Config("waic needs at least one row".into()));
    }
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    for row in log_densities {
        let term = waic_row(row)?;
        lppd += term.lppd;
        p_waic += term.p_waic;
    }
    Ok(-2.0 * (lppd - p_waic) / log_densities.len() as f64)
}

/// Known generating values of a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// True latent value of every observation row, canonical order.
    pub latent: Vec<f64>,
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TypeScores {
    pub mspe: Option<f64>,
    pub mse: Option<f64>,
    pub hove: Option<f64>,
    pub pmcc: Option<f64>,
    pub crps: Option<f64>,
    pub waic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub per_type: Vec<TypeScores>,
    pub pooled: TypeScores,
    pub subset_size: usize,
    pub reps: usize,
    pub wall_seconds: f64,
}

fn from_totals(t: &ScoreTotals) -> TypeScores {
    TypeScores {
        hove: t.hove_mean(),
        pmcc: t.pmcc_mean(),
        crps: t.crps_mean(),
        waic: t.waic(),
        ..TypeScores::default()
    }
}

/// Holdout MSPE per type; Weibull rows use the shape-normalized latent mean.
pub fn holdout_mspe(obs: &ObservationSet, fit: &FitResult, truth: &Truth) -> Result<(Vec<f64>, f64)> {
    if truth.latent.len() != obs.rows.len() {
        return Err(Error::Config(format!(
            "truth has {} latent values for {} rows",
            truth.latent.len(),
            obs.rows.len()
        )));
    }
    let mut per_type = vec![(Vec::new(), Vec::new()); obs.num_types];
    for l in &fit.latent {
        let row = &obs.rows[l.summary.row];
        if obs.holdout[row.site] {
            per_type[row.kind].0.push(truth.latent[l.summary.row]);
            per_type[row.kind].1.push(l.log_scale_mean);
        }
    }
    let values = per_type
        .iter()
        .map(|(t, e)| mspe(t, e))
        .collect::<Result<Vec<_>>>()?;
    let all_t: Vec<f64> = per_type.iter().flat_map(|(t, _)| t.iter().copied()).collect();
    let all_e: Vec<f64> = per_type.iter().flat_map(|(_, e)| e.iter().copied()).collect();
    Ok((values, mspe(&all_t, &all_e)?))
}

/// Assembles the six scores; truth-based ones are absent without truth.
pub fn score_fit(obs: &ObservationSet, fit: &FitResult, truth: Option<&Truth>) -> Result<ScoreReport> {
    let mut per_type: Vec<TypeScores> = if fit.scores.is_empty() {
        vec![TypeScores::default(); obs.num_types]
    } else {
        fit.scores.iter().map(from_totals).collect()
    };
    let mut pooled = if fit.scores.is_empty() {
        TypeScores::default()
    } else {
        from_totals(&fit.pooled_scores())
    };
    if let Some(truth) = truth {
        let (values, all) = holdout_mspe(obs, fit, truth)?;
        for (s, v) in per_type.iter_mut().zip(values) {
            s.mspe = Some(v);
        }
        pooled.mspe = Some(all);
        let estimate: Vec<f64> = fit.coefficient_summary.iter().map(|c| c.mean).collect();
        let true_coef: Vec<f64> = truth.beta.iter().chain(&truth.eta).copied().collect();
        if true_coef.len() == estimate.len() {
            let mse = mse_coeffs(&true_coef, &estimate)?;
            for s in per_type.iter_mut() {
                s.mse = Some(mse);
            }
            pooled.mse = Some(mse);
        }
    }
    Ok(ScoreReport {
        per_type,
        pooled,
        subset_size: fit.subset_size,
        reps: fit.reps(),
        wall_seconds: fit.timings.total.as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElbowRow {
    pub n: usize,
    pub mspe: Vec<Option<f64>>,
    pub hove: Vec<Option<f64>>,
    pub wall_seconds: f64,
}

/// One fit per subset size with a shared root seed.
///
/// Fits run one after another so each wall time reflects a single fit.
pub fn elbow_scan(
    obs: &ObservationSet,
    cfg: &FitConfig,
    grid: &[usize],
    truth: Option<&Truth>,
) -> Result<Vec<ElbowRow>> {
    let total = obs.training_sites().len();
    if let Some(&n) = grid.iter().find(|&&n| n == 0 || n > total) {
        return Err(Error::Config(format!(
            "grid value {n} outside 1..={total} training sites"
        )));
    }
    grid.iter()
        .map(|&n| {
            let started = Instant::now();
            let run = FitConfig {
                subset_size: n,
                mode: SubsetMode::Srs,
                ..cfg.clone()
            };
            let fit = run_fit(obs, &run).map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("subset size {n}: {msg}")),
                Error::Config(msg) => Error::Config(format!("subset size {n}: {msg}")),
                other => other,
            })?;
            let wall_seconds = started.elapsed().as_secs_f64();
            let report = score_fit(obs, &fit, truth)?;
            Ok(ElbowRow {
                n,
                mspe: report.per_type.iter().map(|s| s.mspe).collect(),
                hove: report.per_type.iter().map(|s| s.hove).collect(),
                wall_seconds,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn crps_brute(z: f64, draws: &[f64]) -> f64 {
        let t = draws.len() as f64;
        let a = draws.iter().map(|x| (x - z).abs()).sum::<f64>() / t;
        let mut b = 0.0;
        for x in draws {
            for y in draws {
                b += (x - y).abs();
            }
        }
        a - 0.5 * b / (t * t)
    }

    #[test]
    fn simple_values() {
        assert_eq!(mspe(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mspe(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(mse_coeffs(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(mse_coeffs(&[1.0], &[0.0, 0.0]).is_err());
        assert_eq!(hove(&[1.0, 5.0], &[3.0, 3.0]).unwrap(), 4.0);
        assert_eq!(pmcc_row(1.0, &[0.0, 2.0]), 2.0);
        assert_eq!(crps_empirical(1.0, &[0.0, 2.0]), 0.5);
        assert_eq!(crps_empirical(3.0, &[3.0, 3.0, 3.0]), 0.0);
        assert_eq!(pmcc_row(3.0, &[3.0, 3.0]), 0.0);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert!((quantile_sorted(&v, 0.975) - 3.925).abs() < 1e-12);
    }

    #[test]
    fn waic_cases() {
        let c = -1.7;
        assert!((waic(&[vec![c; 5], vec![c; 5]]).unwrap() - (-2.0 * c)).abs() < 1e-12);
        // one row, two replicates with log densities 0 and ln 3
        let l3 = 3f64.ln();
        let lppd = 2f64.ln();
        let var = l3 * l3 / 2.0;
        let expected = -2.0 * (lppd - var);
        assert!((waic(&[vec![0.0, l3]]).unwrap() - expected).abs() < 1e-12);
        assert!(waic(&[vec![1.0]]).is_err());
    }

    #[test]
    fn waic_prefers_concentrated_densities() {
        let sharp = vec![vec![-0.5, -0.6, -0.55]; 4];
        let diffuse = vec![vec![-2.0, -0.5, -4.0]; 4];
        assert!(waic(&sharp).unwrap() < waic(&diffuse).unwrap());
    }

    #[test]
    fn log_mean_exp_is_stable() {
        assert!((log_mean_exp(&[1000.0, 1000.0]) - 1000.0).abs() < 1e-12);
        assert!((log_mean_exp(&[-1000.0, -1000.0 + 2f64.ln()]) - (-1000.0 + 1.5f64.ln())).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn crps_matches_pairwise_and_is_invariant(
            draws in proptest::collection::vec(-50.0f64..50.0, 2..40),
            z in -60.0f64..60.0,
            shift in -20.0f64..20.0,
        ) {
            let fast = crps_empirical(z, &draws);
            let brute = crps_brute(z, &draws);
            prop_assert!((fast - brute).abs() <= 1e-9 * (1.0 + brute.abs()));
            prop_assert!(fast >= 0.0);
            let mut rev = draws.clone();
            rev.reverse();
            prop_assert!((crps_empirical(z, &rev) - fast).abs() <= 1e-9 * (1.0 + fast));
            let shifted: Vec<f64> = draws.iter().map(|x| x + shift).collect();
            prop_assert!((crps_empirical(z + shift, &shifted) - fast).abs() <= 1e-9 * (1.0 + fast));
        }

        #[test]
        fn pmcc_decomposes(draws in proptest::collection::vec(-10.0f64..10.0, 2..30), z in -10.0f64..10.0) {
            let m = mean(&draws);
            let total = pmcc_row(z, &draws);
            prop_assert!(total >= 0.0);
            prop_assert!((total - (z - m).powi(2) - sample_variance(&draws)).abs() <= 1e-12 * (1.0 + total));
        }
    }
}

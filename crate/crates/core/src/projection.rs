//! Least-squares projection of stacked pseudo-data onto `(ξ, β, η)`.
//!
//! The stacked design is `H = [I X G; 0 I 0; 0 0 I; I 0 0]` acting on
//! `(ξ, β, η)`. The production solver eliminates `ξ` analytically and factors
//! only the `(p + r)`-square system; the dense routines here exist to check it.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, QR};

use crate::error::{Error, Result};

/// Largest `2Kn + p + r` the dense routines accept.
pub const DENSE_LIMIT: usize = 2000;

/// Stacked right-hand side `w = (y_rep, w_β, w_η, w_ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedDraw {
    pub y_rep: DVector<f64>,
    pub w_beta: DVector<f64>,
    pub w_eta: DVector<f64>,
    pub w_xi: DVector<f64>,
    /// Standard deviation of the fine-scale block.
    pub sigma_xi: f64,
}

impl StackedDraw {
    pub fn stacked(&self) -> DVector<f64> {
        let parts = [&self.y_rep, &self.w_beta, &self.w_eta, &self.w_xi];
        let len = parts.iter().map(|v| v.len()).sum();
        DVector::from_iterator(len, parts.iter().flat_map(|v| v.iter().copied()))
    }

    fn check(&self, kn: usize, p: usize, r: usize) -> Result<()> {
        if self.y_rep.len() != kn
            || self.w_beta.len() != p
            || self.w_eta.len() != r
            || self.w_xi.len() != kn
        {
            return Err(Error::Numeric(format!(
                "stacked draw has blocks ({}, {}, {}, {}) but the design needs ({kn}, {p}, {r}, {kn})",
                self.y_rep.len(),
                self.w_beta.len(),
                self.w_eta.len(),
                self.w_xi.len()
            )));
        }
        let finite = [&self.y_rep, &self.w_beta, &self.w_eta, &self.w_xi]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite || !(self.sigma_xi > 0.0 && self.sigma_xi.is_finite()) {
            return Err(Error::Numeric("stacked draw has non-finite entries".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSolution {
    pub xi: DVector<f64>,
    pub beta: DVector<f64>,
    pub eta: DVector<f64>,
    /// `ξ + Xβ + Gη − y_rep`.
    pub tau_y: DVector<f64>,
    /// `−(w_ξ − ξ) / σ_ξ`.
    pub tau_xi: DVector<f64>,
    /// `w − H (ξ, β, η)`.
    pub residual: DVector<f64>,
}

fn hstack(x: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != g.nrows() {
        return Err(Error::Numeric(format!(
            "X has {} rows but G has {}",
            x.nrows(),
            g.nrows()
        )));
    }
    let mut m = DMatrix::zeros(x.nrows(), x.ncols() + g.ncols());
    m.columns_mut(0, x.ncols()).copy_from(x);
    m.columns_mut(x.ncols(), g.ncols()).copy_from(g);
    Ok(m)
}

/// Solves one replicate given separate `X_δ` and `G_δ`.
pub fn solve_projection(
    x: &DMatrix<f64>,
    g: &DMatrix<f64>,
    draw: &StackedDraw,
) -> Result<ReplicateSolution> {
    solve_stacked(&hstack(x, g)?, x.ncols(), draw)
}

/// Solves one replicate given `M = [X_δ | G_δ]` whose first `p` columns are `X_δ`.
///
/// Eliminating `ξ = (y + w_ξ − Mγ)/2` leaves `(I + ½M'M)γ = w_γ + ½M'(y − w_ξ)`.
pub fn solve_stacked(m: &DMatrix<f64>, p: usize, draw: &StackedDraw) -> Result<ReplicateSolution> {
    let kn = m.nrows();
    let q = m.ncols();
    if p > q {
        return Err(Error::Numeric(format!("p = {p} exceeds design width {q}")));
    }
    let r = q - p;
    draw.check(kn, p, r)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("design has non-finite entries".into()));
    }

    let diff = &draw.y_rep - &draw.w_xi;
    let mut normal = m.tr_mul(m);
    normal.scale_mut(0.5);
    for i in 0..q {
        normal[(i, i)] += 1.0;
    }
    let mut rhs = m.tr_mul(&diff);
    rhs.scale_mut(0.5);
    {
        let mut top = rhs.rows_mut(0, p);
        top += &draw.w_beta;
    }
    {
        let mut bottom = rhs.rows_mut(p, r);
        bottom += &draw.w_eta;
    }
    let gamma = Cholesky::new(normal)
        .ok_or_else(|| Error::Numeric("normal matrix lost positive definiteness".into()))?
        .solve(&rhs);

    let fitted = m * &gamma;
    let xi = (&draw.y_rep + &draw.w_xi - &fitted) * 0.5;
    let beta = gamma.rows(0, p).into_owned();
    let eta = gamma.rows(p, r).into_owned();
    let tau_y = &xi + &fitted - &draw.y_rep;
    let resid_xi = &draw.w_xi - &xi;
    let tau_xi = &resid_xi * (-1.0 / draw.sigma_xi);

    let mut residual = DVector::zeros(2 * kn + q);
    residual.rows_mut(0, kn).copy_from(&(-&tau_y));
    residual.rows_mut(kn, p).copy_from(&(&draw.w_beta - &beta));
    residual.rows_mut(kn + p, r).copy_from(&(&draw.w_eta - &eta));
    residual.rows_mut(kn + q, kn).copy_from(&resid_xi);

    Ok(ReplicateSolution {
        xi,
        beta,
        eta,
        tau_y,
        tau_xi,
        residual,
    })
}

/// Dense `(2Kn + p + r) × (Kn + p + r)` stacked design.
pub fn assemble_h(x: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = hstack(x, g)?;
    let kn = m.nrows();
    let q = m.ncols();
    let rows = 2 * kn + q;
    if rows > DENSE_LIMIT {
        return Err(Error::Config(format!(
            "dense stacked design would have {rows} rows (limit {DENSE_LIMIT})"
        )));
    }
    let mut h = DMatrix::zeros(rows, kn + q);
    for i in 0..kn {
        h[(i, i)] = 1.0;
        h[(kn + q + i, i)] = 1.0;
    }
    h.view_mut((0, kn), (kn, q)).copy_from(&m);
    for j in 0..q {
        h[(kn + j, kn + j)] = 1.0;
    }
    Ok(h)
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub solution: ReplicateSolution,
    pub h: DMatrix<f64>,
    /// Orthonormal basis of the orthogonal complement of `H`'s column space.
    pub complement: DMatrix<f64>,
    /// Coordinates `Q'w`.
    pub q_coords: DVector<f64>,
}

/// Column-space projector `H (H'H)^{-1} H'` from a thin Householder QR.
// H always has full column rank (it carries identity blocks), so QR is enough.
// nalgebra's SVD loses accuracy on some of these matrices.
fn projector(h: &DMatrix<f64>) -> DMatrix<f64> {
    let q = QR::new(h.clone()).q();
    &q * q.transpose()
}

/// Solves the full least-squares problem densely and builds the complement basis.
pub fn dense_oracle_solve(
    x: &DMatrix<f64>,
    g: &DMatrix<f64>,
    draw: &StackedDraw,
) -> Result<OracleSolution> {
    let h = assemble_h(x, g)?;
    let kn = x.nrows();
    let p = x.ncols();
    let r = g.ncols();
    let q = p + r;
    draw.check(kn, p, r)?;
    let w = draw.stacked();

    let qr = QR::new(h.clone());
    let (q_thin, upper) = (qr.q(), qr.r());
    let coef = upper
        .solve_upper_triangular(&q_thin.tr_mul(&w))
        .ok_or_else(|| Error::Numeric("dense least squares: singular R factor".into()))?;
    let proj = &q_thin * q_thin.transpose();
    let complement_proj = DMatrix::identity(h.nrows(), h.nrows()) - proj;
    let eig = SymmetricEigen::new(complement_proj);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 0.5)
        .collect();
    if keep.len() != kn {
        return Err(Error::Numeric(format!(
            "complement has dimension {} instead of {kn}",
            keep.len()
        )));
    }
    let complement = eig.eigenvectors.select_columns(keep.iter());
    let q_coords = complement.tr_mul(&w);

    let xi = coef.rows(0, kn).into_owned();
    let beta = coef.rows(kn, p).into_owned();
    let eta = coef.rows(kn + p, r).into_owned();
    let fitted = &h * &coef;
    let residual = &w - &fitted;
    let tau_y = -residual.rows(0, kn).into_owned();
    let tau_xi = residual.rows(kn + q, kn) * (-1.0 / draw.sigma_xi);
    Ok(OracleSolution {
        solution: ReplicateSolution {
            xi,
            beta,
            eta,
            tau_y,
            tau_xi,
            residual,
        },
        h,
        complement,
        q_coords,
    })
}

/// `−J P Σ_w (I − P) J'`, the covariance between the pseudo-data block of the
/// projection `Pw` and the negated pseudo-data block of the residual `(I − P)w`.
pub fn cross_cov_formula(
    x: &DMatrix<f64>,
    g: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let h = assemble_h(x, g)?;
    let n = h.nrows();
    if sigma_w.nrows() != n || sigma_w.ncols() != n {
        return Err(Error::Numeric(format!(
            "covariance is {}x{} but the stacked draw has length {n}",
            sigma_w.nrows(),
            sigma_w.ncols()
        )));
    }
    let scale = sigma_w.amax().max(1.0);
    let asym = (sigma_w - sigma_w.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::Numeric(format!(
            "covariance is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let kn = x.nrows();
    let proj = projector(&h);
    let complement = DMatrix::identity(n, n) - &proj;
    let left = proj.rows(0, kn) * sigma_w;
    let full = left * complement.columns(0, kn);
    Ok(-full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use crate::draws::RngStream;

    fn random_instance(rng: &mut RngStream, kn: usize, p: usize, r: usize) -> (DMatrix<f64>, DMatrix<f64>, StackedDraw) {
        let mut normal = |rows: usize, cols: usize| {
            DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
        };
        let x = normal(kn, p);
        let g = normal(kn, r);
        let draw = StackedDraw {
            y_rep: normal(kn, 1).column(0).into_owned(),
            w_beta: normal(p, 1).column(0).into_owned(),
            w_eta: normal(r, 1).column(0).into_owned(),
            w_xi: normal(kn, 1).column(0).into_owned(),
            sigma_xi: 0.7,
        };
        (x, g, draw)
    }

    fn vec_of(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn midpoint_without_coefficients() {
        let draw = StackedDraw {
            y_rep: vec_of(&[4.0]),
            w_beta: vec_of(&[]),
            w_eta: vec_of(&[]),
            w_xi: vec_of(&[2.0]),
            sigma_xi: 1.0,
        };
        let sol = solve_projection(&DMatrix::zeros(1, 0), &DMatrix::zeros(1, 0), &draw).unwrap();
        assert!((sol.xi[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn hand_solved_single_coefficient() {
        let draw = StackedDraw {
            y_rep: vec_of(&[3.0]),
            w_beta: vec_of(&[0.0]),
            w_eta: vec_of(&[]),
            w_xi: vec_of(&[1.0]),
            sigma_xi: 1.0,
        };
        let x = DMatrix::from_element(1, 1, 1.0);
        let g = DMatrix::zeros(1, 0);
        let sol = solve_projection(&x, &g, &draw).unwrap();
        assert!((sol.beta[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((sol.xi[0] - 5.0 / 3.0).abs() < 1e-14);
        assert!((sol.tau_y[0] + 2.0 / 3.0).abs() < 1e-14);
        let oracle = dense_oracle_solve(&x, &g, &draw).unwrap();
        let ht_res = oracle.h.tr_mul(&sol.residual);
        assert!(ht_res.amax() < 1e-14);
        assert!((oracle.solution.beta[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_oracle_on_random_instance() {
        let mut rng = RngStream::new(11, 0);
        let (x, g, draw) = random_instance(&mut rng, 12, 3, 4);
        let fast = solve_projection(&x, &g, &draw).unwrap();
        let dense = dense_oracle_solve(&x, &g, &draw).unwrap().solution;
        for (a, b) in [
            (&fast.xi, &dense.xi),
            (&fast.beta, &dense.beta),
            (&fast.eta, &dense.eta),
            (&fast.tau_y, &dense.tau_y),
            (&fast.tau_xi, &dense.tau_xi),
            (&fast.residual, &dense.residual),
        ] {
            assert!((a - b).amax() <= 1e-10 * b.amax().max(1.0));
        }
    }

    #[test]
    fn zero_residual_input_is_a_fixed_point() {
        let mut rng = RngStream::new(12, 0);
        let (x, g, draw) = random_instance(&mut rng, 9, 2, 3);
        let h = assemble_h(&x, &g).unwrap();
        let coef = DVector::from_fn(9 + 5, |i, _| (i as f64 * 0.37).sin());
        let w = &h * &coef;
        let exact = StackedDraw {
            y_rep: w.rows(0, 9).into_owned(),
            w_beta: w.rows(9, 2).into_owned(),
            w_eta: w.rows(11, 3).into_owned(),
            w_xi: w.rows(14, 9).into_owned(),
            sigma_xi: draw.sigma_xi,
        };
        let sol = solve_projection(&x, &g, &exact).unwrap();
        assert!((&sol.xi - coef.rows(0, 9)).amax() < 1e-10);
        assert!((&sol.beta - coef.rows(9, 2)).amax() < 1e-10);
        assert!(sol.tau_y.amax() < 1e-10 && sol.tau_xi.amax() < 1e-10);
    }

    #[test]
    fn projection_is_linear_in_the_draw() {
        let mut rng = RngStream::new(13, 0);
        let (x, g, draw) = random_instance(&mut rng, 10, 2, 2);
        let c = -2.5;
        let scaled = StackedDraw {
            y_rep: &draw.y_rep * c,
            w_beta: &draw.w_beta * c,
            w_eta: &draw.w_eta * c,
            w_xi: &draw.w_xi * c,
            sigma_xi: draw.sigma_xi,
        };
        let a = solve_projection(&x, &g, &draw).unwrap();
        let b = solve_projection(&x, &g, &scaled).unwrap();
        assert!((&a.beta * c - &b.beta).amax() < 1e-12);
        assert!((&a.xi * c - &b.xi).amax() < 1e-12);
        assert!((&a.tau_y * c - &b.tau_y).amax() < 1e-12);
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let mut rng = RngStream::new(14, 0);
        let (x, g, mut draw) = random_instance(&mut rng, 4, 1, 1);
        draw.w_xi[0] = f64::NAN;
        assert!(solve_projection(&x, &g, &draw).is_err());
        let (x, g, mut draw) = random_instance(&mut rng, 4, 1, 1);
        draw.w_beta = vec_of(&[1.0, 2.0]);
        assert!(solve_projection(&x, &g, &draw).is_err());
        let big = DMatrix::zeros(1000, 1);
        assert!(assemble_h(&big, &DMatrix::zeros(1000, 0)).is_err());
    }

    #[test]
    fn cross_cov_identity_covariance_vanishes() {
        let mut rng = RngStream::new(15, 0);
        let (x, g, _) = random_instance(&mut rng, 5, 2, 1);
        let n = 2 * 5 + 3;
        let c = cross_cov_formula(&x, &g, &DMatrix::identity(n, n)).unwrap();
        assert!(c.amax() < 1e-12);
        let mut asym = DMatrix::identity(n, n);
        asym[(0, 1)] = 0.5;
        assert!(cross_cov_formula(&x, &g, &asym).is_err());
    }

    #[test]
    fn cross_cov_small_hand_case() {
        // Kn = 2, p = 1, r = 0: compare against an explicit normal-equation projector
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let g = DMatrix::zeros(2, 0);
        let sigma = DMatrix::from_diagonal(&vec_of(&[1.0, 2.0, 3.0, 4.0, 5.0]));
        let h = assemble_h(&x, &g).unwrap();
        let hth_inv = (h.transpose() * &h).try_inverse().unwrap();
        let proj = &h * hth_inv * h.transpose();
        let comp = DMatrix::identity(5, 5) - &proj;
        let expected = -(&proj * &sigma * &comp).view((0, 0), (2, 2)).into_owned();
        let got = cross_cov_formula(&x, &g, &sigma).unwrap();
        assert!((&got - &expected).amax() < 1e-12);
        assert!(got[(0, 1)].abs() > 1e-3);
    }
}

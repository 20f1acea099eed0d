//! Observations, response families, design layout and priors shared by every stage.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::basis::{self, BasisBlock, DistanceMetric};
use crate::error::{Error, Result};

/// Response family of one data type, with its fixed constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyKind {
    /// Real-valued response on the logit scale; `alpha = 1, kappa = 2` is the logistic case.
    LogitBeta { alpha: f64, kappa: f64 },
    /// Positive response, shape `rho_z` drawn per replicate, rate `exp(Y)`.
    Weibull,
    Gaussian,
    Poisson { alpha_xi: f64 },
    /// Trial counts live on each row.
    Binomial { alpha_xi: f64 },
}

pub const DEFAULT_ALPHA_XI: f64 = 0.5;

impl FamilyKind {
    pub fn logistic() -> Self {
        FamilyKind::LogitBeta {
            alpha: 1.0,
            kappa: 2.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::LogitBeta { .. } => "logit_beta",
            FamilyKind::Weibull => "weibull",
            FamilyKind::Gaussian => "gaussian",
            FamilyKind::Poisson { .. } => "poisson",
            FamilyKind::Binomial { .. } => "binomial",
        }
    }

    /// Rows of this family carry a per-row variance drawn from its prior each replicate.
    pub fn uses_row_variance(&self) -> bool {
        matches!(self, FamilyKind::LogitBeta { .. } | FamilyKind::Gaussian)
    }

    pub fn check_constants(&self) -> std::result::Result<(), String> {
        match *self {
            FamilyKind::LogitBeta { alpha, kappa } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(format!("logit_beta alpha must be positive, got {alpha}"));
                }
                if !(kappa - alpha > 0.0 && kappa.is_finite()) {
                    return Err(format!(
                        "logit_beta kappa must exceed alpha, got alpha={alpha} kappa={kappa}"
                    ));
                }
            }
            FamilyKind::Poisson { alpha_xi } | FamilyKind::Binomial { alpha_xi } => {
                if !(alpha_xi > 0.0 && alpha_xi.is_finite()) {
                    return Err(format!("alpha_xi must be positive, got {alpha_xi}"));
                }
            }
            FamilyKind::Weibull | FamilyKind::Gaussian => {}
        }
        Ok(())
    }

    /// Checks that `z` lies in the family's support.
    pub fn check_response(&self, z: f64, trials: u32) -> std::result::Result<(), String> {
        if !z.is_finite() {
            return Err(format!("response {z} is not finite"));
        }
        match self {
            FamilyKind::LogitBeta { .. } | FamilyKind::Gaussian => Ok(()),
            FamilyKind::Weibull if z > 0.0 => Ok(()),
            FamilyKind::Weibull => Err(format!("weibull response must be positive, got {z}")),
            FamilyKind::Poisson { .. } if z >= 0.0 && z.fract() == 0.0 => Ok(()),
            FamilyKind::Poisson { .. } => Err(format!(
                "poisson response must be a non-negative integer, got {z}"
            )),
            FamilyKind::Binomial { .. } => {
                if trials == 0 {
                    Err("binomial row has zero trials".to_string())
                } else if z >= 0.0 && z <= trials as f64 && z.fract() == 0.0 {
                    Ok(())
                } else {
                    Err(format!(
                        "binomial response must be an integer in [0, {trials}], got {z}"
                    ))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub id: u64,
    /// One or two coordinates.
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    /// Index into `ObservationSet::sites`.
    pub site: usize,
    /// Zero-based type index.
    pub kind: usize,
    pub value: f64,
    /// Binomial trial count; 0 for other families.
    pub trials: u32,
}

/// A multi-type spatial dataset in canonical order.
///
/// Sites are sorted by id; rows are type-major, then site-ascending. Per-site
/// covariates are shared by every type observed at the site.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub sites: Vec<Site>,
    pub holdout: Vec<bool>,
    pub rows: Vec<Row>,
    pub num_types: usize,
    pub covariate_names: Vec<String>,
    /// `covariates[site][column]`.
    pub covariates: Vec<Vec<f64>>,
    lookup: HashMap<(usize, usize), usize>,
}

impl ObservationSet {
    /// Builds a dataset, sorting sites by id and rows into canonical order.
    ///
    /// Row `site` fields index into the `sites` slice as given. Nothing is
    /// rejected here; call [`validate_dataset`] for diagnostics.
    pub fn new(
        sites: Vec<Site>,
        holdout: Vec<bool>,
        mut rows: Vec<Row>,
        num_types: usize,
        covariate_names: Vec<String>,
        covariates: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if holdout.len() != sites.len() || covariates.len() != sites.len() {
            return Err(Error::Config(format!(
                "{} sites but {} holdout flags and {} covariate rows",
                sites.len(),
                holdout.len(),
                covariates.len()
            )));
        }
        if let Some(row) = rows.iter().find(|r| r.site >= sites.len()) {
            return Err(Error::Config(format!(
                "row references site index {} of {}",
                row.site,
                sites.len()
            )));
        }
        let mut order: Vec<usize> = (0..sites.len()).collect();
        order.sort_by_key(|&i| sites[i].id);
        let mut new_index = vec![0; sites.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let sites_sorted = order.iter().map(|&i| sites[i].clone()).collect();
        let holdout_sorted = order.iter().map(|&i| holdout[i]).collect();
        let covariates_sorted = order.iter().map(|&i| covariates[i].clone()).collect();
        for row in &mut rows {
            row.site = new_index[row.site];
        }
        rows.sort_by_key(|r| (r.kind, r.site));
        let mut lookup = HashMap::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            lookup.entry((row.kind, row.site)).or_insert(i);
        }
        Ok(ObservationSet {
            sites: sites_sorted,
            holdout: holdout_sorted,
            rows,
            num_types,
            covariate_names,
            covariates: covariates_sorted,
            lookup,
        })
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    /// Row index of `(kind, site)`, if observed.
    pub fn row_index(&self, kind: usize, site: usize) -> Option<usize> {
        self.lookup.get(&(kind, site)).copied()
    }

    /// Indices of sites available for fitting, ascending.
    pub fn training_sites(&self) -> Vec<usize> {
        (0..self.sites.len()).filter(|&i| !self.holdout[i]).collect()
    }

    pub fn covariate_column(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    pub fn coords(&self) -> Vec<Vec<f64>> {
        self.sites.iter().map(|s| s.coords.clone()).collect()
    }
}

/// One entry of a type's fixed-effect design row.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateTerm {
    Intercept,
    Column(String),
    /// Response of another (zero-based) type at the same site.
    Response(usize),
}

impl CovariateTerm {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.eq_ignore_ascii_case("intercept") {
            return Ok(CovariateTerm::Intercept);
        }
        if let Some(rest) = text.strip_prefix("response:") {
            let k: usize = rest
                .parse()
                .map_err(|_| Error::Config(format!("bad response term `{text}`")))?;
            if k == 0 {
                return Err(Error::Config("response types are numbered from 1".into()));
            }
            return Ok(CovariateTerm::Response(k - 1));
        }
        if text.is_empty() {
            return Err(Error::Config("empty covariate name".into()));
        }
        Ok(CovariateTerm::Column(text.to_string()))
    }

    pub fn label(&self) -> String {
        match self {
            CovariateTerm::Intercept => "intercept".to_string(),
            CovariateTerm::Column(name) => name.clone(),
            CovariateTerm::Response(k) => format!("response:{}", k + 1),
        }
    }
}

/// How fixed-effect and basis columns are laid out across types.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    /// Per type, the ordered terms of its fixed-effect block.
    pub covariates: Vec<Vec<CovariateTerm>>,
    pub blocks: Vec<BasisBlock>,
    pub metric: DistanceMetric,
}

impl DesignSpec {
    pub fn num_types(&self) -> usize {
        self.covariates.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.iter().map(Vec::len).sum()
    }

    pub fn r(&self) -> usize {
        self.blocks.iter().map(|b| b.knots.len()).sum()
    }

    /// First column of each type's fixed-effect block.
    pub fn fixed_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.covariates.len());
        let mut acc = 0;
        for terms in &self.covariates {
            offsets.push(acc);
            acc += terms.len();
        }
        offsets
    }

    /// Column labels for `(beta, eta)` in stacked order.
    pub fn coefficient_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.p() + self.r());
        for (k, terms) in self.covariates.iter().enumerate() {
            for term in terms {
                labels.push(format!("beta[{}]:{}", k + 1, term.label()));
            }
        }
        for (b, block) in self.blocks.iter().enumerate() {
            for j in 0..block.knots.len() {
                labels.push(format!("eta[{}]:{}:{}", b + 1, block.scope.label(), j + 1));
            }
        }
        labels
    }
}

/// Full design `[X | G]` for every row of an observation set, canonical row order.
#[derive(Debug, Clone)]
pub struct DesignMatrices {
    pub f: DMatrix<f64>,
    pub p: usize,
    pub r: usize,
}

impl DesignMatrices {
    pub fn x(&self) -> DMatrix<f64> {
        self.f.columns(0, self.p).into_owned()
    }

    pub fn g(&self) -> DMatrix<f64> {
        self.f.columns(self.p, self.r).into_owned()
    }
}

/// Builds `[X | G]` for all rows of `obs`.
pub fn build_design(obs: &ObservationSet, design: &DesignSpec) -> Result<DesignMatrices> {
    if design.num_types() != obs.num_types {
        return Err(Error::Config(format!(
            "design covers {} types but the data has {}",
            design.num_types(),
            obs.num_types
        )));
    }
    let p = design.p();
    let r = design.r();
    let offsets = design.fixed_offsets();
    let mut resolved = Vec::with_capacity(design.covariates.len());
    for terms in &design.covariates {
        let mut cols = Vec::with_capacity(terms.len());
        for term in terms {
            cols.push(match term {
                CovariateTerm::Column(name) => Some(obs.covariate_column(name).ok_or_else(|| {
                    Error::Config(format!("covariate `{name}` not found in covariate file"))
                })?),
                CovariateTerm::Response(j) if *j >= obs.num_types => {
                    return Err(Error::Config(format!(
                        "response:{} refers to a type beyond K={}",
                        j + 1,
                        obs.num_types
                    )))
                }
                _ => None,
            });
        }
        resolved.push(cols);
    }

    let mut f = DMatrix::zeros(obs.rows.len(), p + r);
    for (i, row) in obs.rows.iter().enumerate() {
        let terms = &design.covariates[row.kind];
        for (j, term) in terms.iter().enumerate() {
            let col = offsets[row.kind] + j;
            f[(i, col)] = match term {
                CovariateTerm::Intercept => 1.0,
                CovariateTerm::Column(_) => {
                    obs.covariates[row.site][resolved[row.kind][j].expect("resolved above")]
                }
                CovariateTerm::Response(other) => match obs.row_index(*other, row.site) {
                    Some(idx) => obs.rows[idx].value,
                    None => {
                        return Err(Error::Config(format!(
                            "site {} lacks the type-{} response used as a covariate",
                            obs.sites[row.site].id,
                            other + 1
                        )))
                    }
                },
            };
        }
    }
    if r > 0 {
        let coords = obs.coords();
        let pairs: Vec<(usize, usize)> = obs.rows.iter().map(|r| (r.site, r.kind)).collect();
        let g = basis::build_basis_rows(&coords, &design.blocks, &pairs, design.metric);
        f.columns_mut(p, r).copy_from(&g);
    }
    Ok(DesignMatrices { f, p, r })
}

/// Shape/rate (or shape/scale) constants of the hyperpriors.
///
/// Gamma priors use shape/rate; inverse-gamma priors use shape/scale with
/// `X = scale / Gamma(shape, 1)`. The variance of each Gaussian block uses the
/// matching `rho` draw as its scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperpriorConfig {
    pub rho_shape: f64,
    pub rho_rate: f64,
    pub block_variance_shape: f64,
    pub shape_z_shape: f64,
    pub shape_z_scale: f64,
    pub row_variance_shape: f64,
    pub row_variance_scale: f64,
}

impl Default for HyperpriorConfig {
    fn default() -> Self {
        HyperpriorConfig {
            rho_shape: 1.0,
            rho_rate: 1.0,
            block_variance_shape: 1.0,
            shape_z_shape: 1.0,
            shape_z_scale: 1.0,
            row_variance_shape: 1.0,
            row_variance_scale: 1.5,
        }
    }
}

impl HyperpriorConfig {
    pub fn validate(&self) -> Result<()> {
        let values = [
            ("rho_shape", self.rho_shape),
            ("rho_rate", self.rho_rate),
            ("block_variance_shape", self.block_variance_shape),
            ("shape_z_shape", self.shape_z_shape),
            ("shape_z_scale", self.shape_z_scale),
            ("row_variance_shape", self.row_variance_shape),
            ("row_variance_scale", self.row_variance_scale),
        ];
        for (name, v) in values {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub line: Option<usize>,
    pub site_id: Option<u64>,
    pub kind: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(site) = self.site_id {
            write!(f, "site {site}")?;
            if let Some(k) = self.kind {
                write!(f, ", type {}", k + 1)?;
            }
            write!(f, ": ")?;
        }
        write!(f, "{}", self.message)
    }
}

fn violation(obs: &ObservationSet, row: &Row, message: String) -> Violation {
    Violation {
        line: None,
        site_id: Some(obs.sites[row.site].id),
        kind: Some(row.kind),
        message,
    }
}

/// Lists every invariant the dataset breaks; an empty list means it is usable.
pub fn validate_dataset(
    obs: &ObservationSet,
    design: &DesignSpec,
    families: &[FamilyKind],
) -> Vec<Violation> {
    let mut out = Vec::new();
    let general = |message: String| Violation {
        line: None,
        site_id: None,
        kind: None,
        message,
    };
    if families.len() != obs.num_types {
        out.push(general(format!(
            "{} families configured for {} types",
            families.len(),
            obs.num_types
        )));
    }
    if design.num_types() != obs.num_types {
        out.push(general(format!(
            "design covers {} types but the data has {}",
            design.num_types(),
            obs.num_types
        )));
    }
    for family in families {
        if let Err(msg) = family.check_constants() {
            out.push(general(msg));
        }
    }
    for block in &design.blocks {
        if let Err(msg) = block.check(obs.num_types) {
            out.push(general(msg));
        }
    }
    for terms in &design.covariates {
        for term in terms {
            match term {
                CovariateTerm::Column(name) if obs.covariate_column(name).is_none() => {
                    out.push(general(format!("covariate `{name}` not found")));
                }
                CovariateTerm::Response(k) if *k >= obs.num_types => {
                    out.push(general(format!("response:{} is not a valid type", k + 1)));
                }
                _ => {}
            }
        }
    }
    for w in obs.sites.windows(2) {
        if w[0].id == w[1].id {
            out.push(general(format!("site id {} appears twice", w[0].id)));
        }
    }
    let dim = obs.sites.first().map_or(0, |s| s.coords.len());
    for site in &obs.sites {
        if site.coords.is_empty() || site.coords.len() > 2 || site.coords.len() != dim {
            out.push(Violation {
                line: None,
                site_id: Some(site.id),
                kind: None,
                message: format!("site has {} coordinates", site.coords.len()),
            });
        } else if site.coords.iter().any(|c| !c.is_finite()) {
            out.push(Violation {
                line: None,
                site_id: Some(site.id),
                kind: None,
                message: "non-finite coordinate".to_string(),
            });
        }
    }
    for (i, covs) in obs.covariates.iter().enumerate() {
        if covs.len() != obs.covariate_names.len() || covs.iter().any(|c| !c.is_finite()) {
            out.push(Violation {
                line: None,
                site_id: Some(obs.sites[i].id),
                kind: None,
                message: "covariate values missing or non-finite".to_string(),
            });
        }
    }

    let mut present = vec![vec![false; obs.num_sites()]; obs.num_types];
    for row in &obs.rows {
        if row.kind >= obs.num_types {
            out.push(violation(obs, row, format!("type index {} out of range", row.kind + 1)));
            continue;
        }
        if present[row.kind][row.site] {
            out.push(violation(obs, row, "duplicate (site, type) pair".to_string()));
            continue;
        }
        present[row.kind][row.site] = true;
        if let Some(family) = families.get(row.kind) {
            if let Err(msg) = family.check_response(row.value, row.trials) {
                out.push(violation(obs, row, msg));
            }
        }
    }
    let uses_response: Vec<usize> = design
        .covariates
        .iter()
        .flatten()
        .filter_map(|t| match t {
            CovariateTerm::Response(k) => Some(*k),
            _ => None,
        })
        .collect();
    for site in 0..obs.num_sites() {
        for k in 0..obs.num_types {
            if present[k][site] {
                continue;
            }
            if !obs.holdout[site] {
                out.push(Violation {
                    line: None,
                    site_id: Some(obs.sites[site].id),
                    kind: Some(k),
                    message: "training site is missing this type".to_string(),
                });
            } else if uses_response.contains(&k) {
                out.push(Violation {
                    line: None,
                    site_id: Some(obs.sites[site].id),
                    kind: Some(k),
                    message: "response used as a covariate is missing".to_string(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisKind, BasisScope};

    fn two_type_set(values: [f64; 4]) -> ObservationSet {
        let sites = vec![
            Site { id: 8, coords: vec![2.0] },
            Site { id: 7, coords: vec![1.0] },
        ];
        let rows = vec![
            Row { site: 0, kind: 1, value: values[3], trials: 0 },
            Row { site: 1, kind: 0, value: values[0], trials: 0 },
            Row { site: 0, kind: 0, value: values[1], trials: 0 },
            Row { site: 1, kind: 1, value: values[2], trials: 0 },
        ];
        ObservationSet::new(
            sites,
            vec![false, false],
            rows,
            2,
            vec!["x".into()],
            vec![vec![0.5], vec![-0.5]],
        )
        .unwrap()
    }

    fn two_type_design() -> DesignSpec {
        DesignSpec {
            covariates: vec![
                vec![CovariateTerm::Intercept, CovariateTerm::Column("x".into())],
                vec![CovariateTerm::Intercept, CovariateTerm::Response(0)],
            ],
            blocks: vec![BasisBlock {
                kind: BasisKind::GaussianRbf,
                knots: vec![vec![1.0], vec![2.0]],
                bandwidth: 1.0,
                scope: BasisScope::Shared,
            }],
            metric: DistanceMetric::Planar,
        }
    }

    const FAMILIES: [FamilyKind; 2] = [
        FamilyKind::LogitBeta { alpha: 1.0, kappa: 2.0 },
        FamilyKind::Weibull,
    ];

    #[test]
    fn canonical_order_is_type_major_site_ascending() {
        let obs = two_type_set([0.1, 0.2, 1.5, 2.5]);
        assert_eq!(obs.sites[0].id, 7);
        let order: Vec<(usize, usize)> = obs.rows.iter().map(|r| (r.kind, r.site)).collect();
        assert_eq!(order, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(obs.rows[0].value, 0.1);
        assert_eq!(obs.covariates[0], vec![-0.5]);
    }

    #[test]
    fn well_formed_set_has_no_violations() {
        let obs = two_type_set([0.1, 0.2, 1.5, 2.5]);
        assert!(validate_dataset(&obs, &two_type_design(), &FAMILIES).is_empty());
    }

    #[test]
    fn negative_weibull_response_is_reported() {
        let obs = two_type_set([0.1, 0.2, -1.0, 2.5]);
        let v = validate_dataset(&obs, &two_type_design(), &FAMILIES);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].site_id, Some(7));
        assert_eq!(v[0].kind, Some(1));
    }

    #[test]
    fn duplicate_pair_is_reported_once() {
        let sites = vec![Site { id: 7, coords: vec![0.0] }];
        let rows = vec![
            Row { site: 0, kind: 0, value: 1.0, trials: 0 },
            Row { site: 0, kind: 0, value: 2.0, trials: 0 },
        ];
        let obs = ObservationSet::new(sites, vec![false], rows, 1, vec![], vec![vec![]]).unwrap();
        let design = DesignSpec {
            covariates: vec![vec![CovariateTerm::Intercept]],
            blocks: vec![],
            metric: DistanceMetric::Planar,
        };
        let v = validate_dataset(&obs, &design, &[FamilyKind::Gaussian]);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("duplicate"));
        assert_eq!(validate_dataset(&obs, &design, &[FamilyKind::Gaussian]), v);
    }

    #[test]
    fn missing_type_at_training_site_is_reported() {
        let sites = vec![Site { id: 1, coords: vec![0.0] }, Site { id: 2, coords: vec![1.0] }];
        let rows = vec![
            Row { site: 0, kind: 0, value: 1.0, trials: 0 },
            Row { site: 1, kind: 0, value: 1.0, trials: 0 },
            Row { site: 0, kind: 1, value: 1.0, trials: 0 },
        ];
        let obs =
            ObservationSet::new(sites, vec![false, false], rows, 2, vec![], vec![vec![], vec![]])
                .unwrap();
        let design = DesignSpec {
            covariates: vec![vec![CovariateTerm::Intercept], vec![CovariateTerm::Intercept]],
            blocks: vec![],
            metric: DistanceMetric::Planar,
        };
        let v = validate_dataset(&obs, &design, &[FamilyKind::Gaussian, FamilyKind::Gaussian]);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].site_id, v[0].kind), (Some(2), Some(1)));
    }

    #[test]
    fn design_rows_zero_other_types_and_pick_up_cross_response() {
        let obs = two_type_set([0.1, 0.2, 1.5, 2.5]);
        let design = two_type_design();
        let mats = build_design(&obs, &design).unwrap();
        assert_eq!((mats.p, mats.r), (4, 2));
        // type-2 row at site id 8 uses the type-1 response at the same site
        let row = obs.row_index(1, 1).unwrap();
        assert_eq!(mats.f.row(row).iter().take(4).copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 0.2]);
        let row = obs.row_index(0, 0).unwrap();
        assert_eq!(mats.f[(row, 1)], -0.5);
        assert_eq!(mats.f[(row, 2)], 0.0);
        // shared block identical across types
        let a = obs.row_index(0, 1).unwrap();
        let b = obs.row_index(1, 1).unwrap();
        assert_eq!(mats.f.row(a).columns(4, 2), mats.f.row(b).columns(4, 2));
    }

    #[test]
    fn family_domains() {
        assert!(FamilyKind::Poisson { alpha_xi: 0.5 }.check_response(2.5, 0).is_err());
        assert!(FamilyKind::Binomial { alpha_xi: 0.5 }.check_response(3.0, 2).is_err());
        assert!(FamilyKind::Binomial { alpha_xi: 0.5 }.check_response(2.0, 2).is_ok());
        assert!(FamilyKind::LogitBeta { alpha: 1.0, kappa: 1.0 }.check_constants().is_err());
        assert!(FamilyKind::Gaussian.check_response(f64::NAN, 0).is_err());
    }

    #[test]
    fn covariate_terms_parse() {
        assert_eq!(CovariateTerm::parse("Intercept").unwrap(), CovariateTerm::Intercept);
        assert_eq!(CovariateTerm::parse("response:1").unwrap(), CovariateTerm::Response(0));
        assert!(CovariateTerm::parse("response:0").is_err());
        assert_eq!(CovariateTerm::parse("x1").unwrap(), CovariateTerm::Column("x1".into()));
    }
}

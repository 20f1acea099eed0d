//! Spatial basis functions: Gaussian radial bases, bisquare bases and the block layout of `G`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const EARTH_RADIUS_KM: f64 = 6371.0;
const KM_PER_DEGREE: f64 = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    GaussianRbf,
    Bisquare,
}

/// Which rows a block is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisScope {
    /// Only rows of this zero-based type.
    Type(usize),
    /// Rows of every type.
    Shared,
}

impl BasisScope {
    pub fn applies_to(&self, kind: usize) -> bool {
        match self {
            BasisScope::Type(k) => *k == kind,
            BasisScope::Shared => true,
        }
    }

    pub fn label(&self) -> String {
        match self {
            BasisScope::Type(k) => format!("type{}", k + 1),
            BasisScope::Shared => "shared".to_string(),
        }
    }
}

/// Planar Euclidean distance, or haversine distance in kilometres for
/// `(longitude, latitude)` coordinates in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceMetric {
    #[default]
    Planar,
    GreatCircle,
}

impl DistanceMetric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::Planar => planar_distance(a, b),
            DistanceMetric::GreatCircle => {
                let (lon1, lat1) = (a[0].to_radians(), a[1].to_radians());
                let (lon2, lat2) = (b[0].to_radians(), b[1].to_radians());
                let h = ((lat2 - lat1) / 2.0).sin().powi(2)
                    + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
                2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
            }
        }
    }
}

fn planar_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisBlock {
    pub kind: BasisKind,
    pub knots: Vec<Vec<f64>>,
    /// RBF scale, or bisquare support radius.
    pub bandwidth: f64,
    pub scope: BasisScope,
}

impl BasisBlock {
    pub fn check(&self, num_types: usize) -> std::result::Result<(), String> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(format!("basis bandwidth must be positive, got {}", self.bandwidth));
        }
        if self.knots.is_empty() {
            return Err("basis block has no knots".to_string());
        }
        if let BasisScope::Type(k) = self.scope {
            if k >= num_types {
                return Err(format!("basis block scoped to type {} of {num_types}", k + 1));
            }
        }
        Ok(())
    }

    fn eval_distance(&self, d: f64) -> f64 {
        match self.kind {
            BasisKind::GaussianRbf => rbf_of_distance(d, self.bandwidth),
            BasisKind::Bisquare => bisquare_of_distance(d, self.bandwidth),
        }
    }
}

/// `count` equally spaced centers on `[lo, hi]`, endpoints included; one knot sits at the midpoint.
pub fn make_knots_1d(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|i| if i + 1 == count { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

/// Rectangular `nx × ny` lattice over `[lo, hi]`, x varying fastest.
pub fn make_knots_grid(lo: [f64; 2], hi: [f64; 2], nx: usize, ny: usize) -> Vec<Vec<f64>> {
    let xs = make_knots_1d(lo[0], hi[0], nx);
    let ys = make_knots_1d(lo[1], hi[1], ny);
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| vec![x, y]))
        .collect()
}

pub fn eval_gaussian_rbf(s: &[f64], center: &[f64], bandwidth: f64) -> f64 {
    rbf_of_distance(planar_distance(s, center), bandwidth)
}

pub fn eval_bisquare(s: &[f64], center: &[f64], radius: f64) -> f64 {
    bisquare_of_distance(planar_distance(s, center), radius)
}

fn rbf_of_distance(d: f64, bandwidth: f64) -> f64 {
    (-(d * d) / (2.0 * bandwidth * bandwidth)).exp()
}

fn bisquare_of_distance(d: f64, radius: f64) -> f64 {
    if d >= radius {
        0.0
    } else {
        let u = d / radius;
        (1.0 - u * u) * (1.0 - u * u)
    }
}

/// Evaluates the basis blocks on the given `(site, type)` rows.
pub fn build_basis_rows(
    coords: &[Vec<f64>],
    blocks: &[BasisBlock],
    rows: &[(usize, usize)],
    metric: DistanceMetric,
) -> DMatrix<f64> {
    let r: usize = blocks.iter().map(|b| b.knots.len()).sum();
    let mut g = DMatrix::zeros(rows.len(), r);
    let mut offset = 0;
    for block in blocks {
        for (j, knot) in block.knots.iter().enumerate() {
            let mut col = g.column_mut(offset + j);
            for (i, &(site, kind)) in rows.iter().enumerate() {
                if block.scope.applies_to(kind) {
                    col[i] = block.eval_distance(metric.distance(&coords[site], knot));
                }
            }
        }
        offset += block.knots.len();
    }
    g
}

/// `G` for all `K · N` rows in canonical order (type-major, site-ascending).
pub fn build_basis_matrix(
    coords: &[Vec<f64>],
    blocks: &[BasisBlock],
    num_types: usize,
    metric: DistanceMetric,
) -> DMatrix<f64> {
    let rows: Vec<(usize, usize)> = (0..num_types)
        .flat_map(|k| (0..coords.len()).map(move |i| (i, k)))
        .collect();
    build_basis_rows(coords, blocks, &rows, metric)
}

/// Knot layout of a requested block before the domain is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KnotLayout {
    Line(usize),
    Grid(usize, usize),
}

/// A basis block described by counts; resolved against site coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRequest {
    pub kind: BasisKind,
    pub scope: BasisScope,
    pub layout: KnotLayout,
    pub bandwidth: Option<f64>,
}

impl BasisRequest {
    /// Parses `rbf:<type|shared>:<count>[:bandwidth]` or
    /// `bisquare:<type|shared>:<nx>x<ny>[:radius]` (a single count means a 1-D line).
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad basis block `{text}`"));
        let parts: Vec<&str> = text.trim().split(':').collect();
        if parts.len() < 3 || parts.len() > 4 {
            return Err(bad());
        }
        let kind = match parts[0] {
            "rbf" => BasisKind::GaussianRbf,
            "bisquare" => BasisKind::Bisquare,
            _ => return Err(bad()),
        };
        let scope = if parts[1] == "shared" {
            BasisScope::Shared
        } else {
            let k: usize = parts[1].parse().map_err(|_| bad())?;
            if k == 0 {
                return Err(bad());
            }
            BasisScope::Type(k - 1)
        };
        let layout = match parts[2].split_once('x') {
            Some((a, b)) => KnotLayout::Grid(
                a.parse().map_err(|_| bad())?,
                b.parse().map_err(|_| bad())?,
            ),
            None => KnotLayout::Line(parts[2].parse().map_err(|_| bad())?),
        };
        let bandwidth = match parts.get(3) {
            Some(v) => Some(v.parse().map_err(|_| bad())?),
            None => None,
        };
        Ok(BasisRequest {
            kind,
            scope,
            layout,
            bandwidth,
        })
    }

    /// Places knots over `domain` (per-axis `[lo, hi]`); the default bandwidth is
    /// the knot spacing for RBFs and 1.5× spacing for bisquares.
    pub fn resolve(&self, domain: &[[f64; 2]], metric: DistanceMetric) -> Result<BasisBlock> {
        let (knots, spacing) = match self.layout {
            KnotLayout::Line(count) => {
                if domain.len() != 1 {
                    return Err(Error::Config("line knots need 1-D coordinates".into()));
                }
                let [lo, hi] = domain[0];
                (
                    make_knots_1d(lo, hi, count).into_iter().map(|c| vec![c]).collect(),
                    spacing_of(lo, hi, count),
                )
            }
            KnotLayout::Grid(nx, ny) => {
                if domain.len() != 2 {
                    return Err(Error::Config("grid knots need 2-D coordinates".into()));
                }
                let knots = make_knots_grid(
                    [domain[0][0], domain[1][0]],
                    [domain[0][1], domain[1][1]],
                    nx,
                    ny,
                );
                let sx = spacing_of(domain[0][0], domain[0][1], nx);
                let sy = spacing_of(domain[1][0], domain[1][1], ny);
                (knots, sx.max(sy))
            }
        };
        let spacing = match metric {
            DistanceMetric::Planar => spacing,
            DistanceMetric::GreatCircle => spacing * KM_PER_DEGREE,
        };
        let bandwidth = self.bandwidth.unwrap_or(match self.kind {
            BasisKind::GaussianRbf => spacing,
            BasisKind::Bisquare => 1.5 * spacing,
        });
        let block = BasisBlock {
            kind: self.kind,
            knots,
            bandwidth,
            scope: self.scope,
        };
        if block.knots.is_empty() || !(bandwidth > 0.0) {
            return Err(Error::Config(format!(
                "basis block resolved to {} knots with bandwidth {bandwidth}",
                block.knots.len()
            )));
        }
        Ok(block)
    }
}

fn spacing_of(lo: f64, hi: f64, count: usize) -> f64 {
    if count >= 2 {
        (hi - lo) / (count - 1) as f64
    } else if hi > lo {
        hi - lo
    } else {
        1.0
    }
}

/// Per-axis `[min, max]` of the coordinates.
pub fn bounding_box(coords: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let dim = coords.first().map_or(0, Vec::len);
    (0..dim)
        .map(|a| {
            coords.iter().fold([f64::INFINITY, f64::NEG_INFINITY], |acc, c| {
                [acc[0].min(c[a]), acc[1].max(c[a])]
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn knots_1d() {
        assert_eq!(make_knots_1d(0.0, 10.0, 2), vec![0.0, 10.0]);
        assert_eq!(make_knots_1d(0.0, 10.0, 3), vec![0.0, 5.0, 10.0]);
        assert_eq!(make_knots_1d(0.0, 1.0, 1), vec![0.5]);
    }

    #[test]
    fn rbf_values() {
        assert_eq!(eval_gaussian_rbf(&[3.0], &[3.0], 2.0), 1.0);
        let v = eval_gaussian_rbf(&[0.0, 0.0], &[3.0, 4.0], 5.0);
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        let mut prev = 1.0;
        for d in 1..50 {
            let v = eval_gaussian_rbf(&[d as f64], &[0.0], 3.0);
            assert!(v <= prev);
            prev = v;
        }
        assert!(prev < 1e-30);
    }

    #[test]
    fn bisquare_values() {
        assert_eq!(eval_bisquare(&[1.0, 1.0], &[1.0, 1.0], 2.0), 1.0);
        assert_eq!(eval_bisquare(&[2.0], &[0.0], 2.0), 0.0);
        assert_eq!(eval_bisquare(&[1.0], &[0.0], 2.0), 0.5625);
    }

    fn line_block(count: usize, scope: BasisScope) -> BasisBlock {
        BasisRequest {
            kind: BasisKind::GaussianRbf,
            scope,
            layout: KnotLayout::Line(count),
            bandwidth: None,
        }
        .resolve(&[[1.0, 100.0]], DistanceMetric::Planar)
        .unwrap()
    }

    #[test]
    fn shared_block_rows_match_across_types() {
        let coords: Vec<Vec<f64>> = (1..=5).map(|i| vec![i as f64 * 10.0]).collect();
        let g = build_basis_matrix(&coords, &[line_block(4, BasisScope::Shared)], 2, DistanceMetric::Planar);
        for i in 0..5 {
            assert_eq!(g.row(i), g.row(i + 5));
        }
    }

    #[test]
    fn three_block_layout_zero_structure() {
        let coords: Vec<Vec<f64>> = (1..=20).map(|i| vec![i as f64 * 5.0]).collect();
        let blocks = vec![
            line_block(15, BasisScope::Type(0)),
            line_block(15, BasisScope::Type(1)),
            line_block(15, BasisScope::Shared),
        ];
        let g = build_basis_matrix(&coords, &blocks, 2, DistanceMetric::Planar);
        assert_eq!(g.ncols(), 45);
        for i in 0..20 {
            assert!(g.row(i).columns(15, 15).iter().all(|&v| v == 0.0));
            assert!(g.row(i + 20).columns(0, 15).iter().all(|&v| v == 0.0));
            assert!(g.row(i).columns(0, 15).iter().any(|&v| v > 0.0));
        }
        // default RBF bandwidth is the knot spacing
        assert!((blocks[0].bandwidth - 99.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn single_bisquare_knot_at_site() {
        let block = BasisBlock {
            kind: BasisKind::Bisquare,
            knots: vec![vec![0.3, 0.7]],
            bandwidth: 1.0,
            scope: BasisScope::Shared,
        };
        let g = build_basis_matrix(&[vec![0.3, 0.7]], &[block], 1, DistanceMetric::Planar);
        assert_eq!(g.nrows(), 1);
        assert_eq!(g[(0, 0)], 1.0);
    }

    #[test]
    fn grid_resolution_and_parse() {
        let req = BasisRequest::parse("bisquare:shared:3x2").unwrap();
        let block = req.resolve(&[[0.0, 4.0], [0.0, 1.0]], DistanceMetric::Planar).unwrap();
        assert_eq!(block.knots.len(), 6);
        assert_eq!(block.knots[4], vec![2.0, 1.0]);
        assert!((block.bandwidth - 3.0).abs() < 1e-12);
        let req = BasisRequest::parse("rbf:2:15:0.25").unwrap();
        assert_eq!(req.scope, BasisScope::Type(1));
        assert_eq!(req.bandwidth, Some(0.25));
        assert!(BasisRequest::parse("rbf:0:15").is_err());
        assert!(BasisRequest::parse("spline:1:15").is_err());
    }

    #[test]
    fn great_circle_quarter_meridian() {
        let d = DistanceMetric::GreatCircle.distance(&[0.0, 0.0], &[0.0, 90.0]);
        assert!((d - EARTH_RADIUS_KM * std::f64::consts::FRAC_PI_2).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn bisquare_hard_zero_and_bounded_rows(
            pts in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..30),
            radius in 0.5f64..4.0,
        ) {
            let coords: Vec<Vec<f64>> = pts.iter().map(|&(x, y)| vec![x, y]).collect();
            let block = BasisBlock {
                kind: BasisKind::Bisquare,
                knots: make_knots_grid([0.0, 0.0], [10.0, 10.0], 4, 4),
                bandwidth: radius,
                scope: BasisScope::Shared,
            };
            let g = build_basis_matrix(&coords, std::slice::from_ref(&block), 1, DistanceMetric::Planar);
            for (i, c) in coords.iter().enumerate() {
                for (j, knot) in block.knots.iter().enumerate() {
                    if planar_distance(c, knot) >= radius {
                        prop_assert_eq!(g[(i, j)], 0.0);
                    }
                }
                prop_assert!(g.row(i).norm() <= (g.ncols() as f64).sqrt());
            }
        }
    }
}

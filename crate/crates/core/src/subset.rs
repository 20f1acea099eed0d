//! Site-level subset designs and gathering of subset rows.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{DesignMatrices, ObservationSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetMode {
    /// Simple random sample of sites without replacement.
    Srs,
    /// Every training site.
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetDraw {
    /// Site indices, ascending.
    pub sites: Vec<usize>,
    pub mode: SubsetMode,
}

impl SubsetDraw {
    pub fn n(&self) -> usize {
        self.sites.len()
    }
}

/// Draws `n` sites from `frame` (ascending site indices).
///
/// Drawing every site consumes no randomness, so `Srs` with `n = N` matches `All`.
pub fn draw_subset<R: Rng + ?Sized>(
    frame: &[usize],
    n: usize,
    mode: SubsetMode,
    rng: &mut R,
) -> Result<SubsetDraw> {
    let total = frame.len();
    if mode == SubsetMode::All || n == total {
        if mode == SubsetMode::Srs && n == 0 {
            return Err(Error::Config("subset size must be at least 1".into()));
        }
        return Ok(SubsetDraw {
            sites: frame.to_vec(),
            mode,
        });
    }
    if n == 0 || n > total {
        return Err(Error::Config(format!(
            "subset size {n} outside 1..={total} training sites"
        )));
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, total, n)
        .into_iter()
        .map(|i| frame[i])
        .collect();
    picked.sort_unstable();
    Ok(SubsetDraw {
        sites: picked,
        mode,
    })
}

/// Responses and design rows of a subset, canonical order.
#[derive(Debug, Clone)]
pub struct SubsetData {
    /// Observation row index of each subset row.
    pub rows: Vec<usize>,
    pub z: DVector<f64>,
    /// `[X_δ | G_δ]`.
    pub m: DMatrix<f64>,
    pub p: usize,
}

impl SubsetData {
    pub fn x(&self) -> DMatrix<f64> {
        self.m.columns(0, self.p).into_owned()
    }

    pub fn g(&self) -> DMatrix<f64> {
        let r = self.m.ncols() - self.p;
        self.m.columns(self.p, r).into_owned()
    }
}

/// Gathers the rows of every type at the drawn sites.
pub fn gather_subset(
    obs: &ObservationSet,
    mats: &DesignMatrices,
    draw: &SubsetDraw,
) -> Result<SubsetData> {
    let mut rows = Vec::with_capacity(draw.sites.len() * obs.num_types);
    for kind in 0..obs.num_types {
        for &site in &draw.sites {
            rows.push(obs.row_index(kind, site).ok_or_else(|| {
                Error::Config(format!(
                    "site {} has no type-{} row",
                    obs.sites[site].id,
                    kind + 1
                ))
            })?);
        }
    }
    let z = DVector::from_iterator(rows.len(), rows.iter().map(|&i| obs.rows[i].value));
    let m = mats.f.select_rows(rows.iter());
    Ok(SubsetData {
        rows,
        z,
        m,
        p: mats.p,
    })
}

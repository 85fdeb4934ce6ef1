//! Quantile feature binning for histogram-based tree fitting.

use rayon::prelude::*;

use crate::data::DenseFeatures;

/// Per-feature quantile bin boundaries plus the binned copy of a dataset.
///
/// Boundaries are strictly increasing and upper-inclusive: a value `v` falls
/// in bin `b` iff `boundary[b-1] < v <= boundary[b]`. The last boundary is the
/// feature's maximum, so every training value gets a bin; unseen larger values
/// clamp to the last bin.
#[derive(Debug, Clone)]
pub struct BinIndex {
    boundaries: Vec<Vec<f64>>,
    bins: Vec<u8>,
    pub n_rows: usize,
    pub n_features: usize,
}

impl BinIndex {
    /// Bin id of a document/feature cell.
    #[inline]
    pub fn bin(&self, row: usize, feature: usize) -> u8 {
        self.bins[row * self.n_features + feature]
    }

    #[inline]
    pub fn row_bins(&self, row: usize) -> &[u8] {
        &self.bins[row * self.n_features..(row + 1) * self.n_features]
    }

    pub fn n_bins_of(&self, feature: usize) -> usize {
        self.boundaries[feature].len()
    }

    /// Upper boundary value of `bin` for `feature` (the split threshold when
    /// splitting after this bin).
    pub fn boundary(&self, feature: usize, bin: usize) -> f64 {
        self.boundaries[feature][bin]
    }

    pub fn boundaries(&self) -> &[Vec<f64>] {
        &self.boundaries
    }
}

fn bin_of(boundaries: &[f64], v: f64) -> u8 {
    let b = boundaries.partition_point(|&bound| bound < v);
    b.min(boundaries.len() - 1) as u8
}

/// Builds quantile bin boundaries for every feature and bins all documents.
///
/// Boundaries are feature-value quantiles; a feature with `<= n_bins` distinct
/// values gets one bin per distinct value, and a constant feature a single bin.
///
/// # Panics
/// If `n_bins` is outside `2..=256`.
pub fn build_bins(features: &DenseFeatures, n_bins: usize) -> BinIndex {
    assert!((2..=256).contains(&n_bins), "n_bins must be in 2..=256");
    let n_rows = features.n_rows;
    let n_features = features.n_features;

    let boundaries: Vec<Vec<f64>> = (0..n_features)
        .into_par_iter()
        .map(|f| {
            let mut vals: Vec<f64> = (0..n_rows).map(|r| features.value(r, f)).collect();
            vals.sort_unstable_by(f64::total_cmp);
            vals.dedup();
            if vals.len() <= n_bins {
                return vals;
            }
            let col: Vec<f64> = {
                let mut c: Vec<f64> = (0..n_rows).map(|r| features.value(r, f)).collect();
                c.sort_unstable_by(f64::total_cmp);
                c
            };
            let mut bounds = Vec::with_capacity(n_bins);
            for k in 1..=n_bins {
                let idx = (k * n_rows).div_ceil(n_bins) - 1;
                bounds.push(col[idx]);
            }
            bounds.dedup();
            bounds
        })
        .collect();

    let mut bins = vec![0u8; n_rows * n_features];
    bins.par_chunks_mut(n_features)
        .enumerate()
        .for_each(|(r, row)| {
            for (f, cell) in row.iter_mut().enumerate() {
                *cell = bin_of(&boundaries[f], features.value(r, f));
            }
        });

    BinIndex {
        boundaries,
        bins,
        n_rows,
        n_features,
    }
}

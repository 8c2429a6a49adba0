//! Saab transform: a PCA variant with a fixed DC filter and a bias large
//! enough to keep every output non-negative on training-range inputs.
//!
//! The channel-wise variant fits one small transform per input channel.

mod tree;

pub use tree::{propagate_energy, FeatureTree, NodeId, NodeStatus, TreeNode};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// How many filters a fit keeps: filters are taken in order (DC first, then
/// AC by decreasing variance) until their cumulative energy reaches `energy_keep`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaabFitOptions {
    pub energy_keep: f64,
}

impl Default for SaabFitOptions {
    fn default() -> Self {
        Self { energy_keep: 1.0 }
    }
}

/// A fitted Saab layer: `y_k = a_kᵀ v + bias` for the `kept_dim` filters.
#[derive(Debug, Clone, PartialEq)]
pub struct SaabLayer {
    input_dim: usize,
    /// Row 0 is the DC filter, rows 1.. the AC filters.
    filters: DMatrix<f64>,
    bias: f64,
    energies: Vec<f64>,
}

impl SaabLayer {
    /// Rebuilds a layer from stored parameters, checking shapes.
    pub fn from_parts(filters: DMatrix<f64>, bias: f64, energies: Vec<f64>) -> Result<Self> {
        if filters.nrows() == 0 || filters.nrows() > filters.ncols() {
            return Err(Error::InvalidInput(format!(
                "filter bank must have 1..={} rows, got {}",
                filters.ncols(),
                filters.nrows()
            )));
        }
        if energies.len() != filters.nrows() {
            return Err(Error::DimensionMismatch {
                expected: filters.nrows(),
                got: energies.len(),
            });
        }
        Ok(Self {
            input_dim: filters.ncols(),
            filters,
            bias,
            energies,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn kept_dim(&self) -> usize {
        self.filters.nrows()
    }

    pub fn filters(&self) -> &DMatrix<f64> {
        &self.filters
    }

    pub fn dc_filter(&self) -> DVector<f64> {
        self.filters.row(0).transpose()
    }

    pub fn ac_filters(&self) -> DMatrix<f64> {
        self.filters.rows(1, self.kept_dim() - 1).into_owned()
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Fraction of the total training variance carried by each kept filter.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Stored scalars: DC + AC filter weights plus the bias.
    pub fn parameter_count(&self) -> usize {
        self.filters.len() + 1
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.kept_dim()];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`SaabLayer::apply`] for hot loops.
    pub(crate) fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.input_dim);
        for (k, o) in out.iter_mut().enumerate() {
            let row = self.filters.row(k);
            let mut acc = 0.0;
            for (a, x) in row.iter().zip(v) {
                acc += a * x;
            }
            *o = acc + self.bias;
        }
    }
}

/// Orthonormal basis of the complement of the all-ones direction (Helmert rows).
fn ac_basis(n: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(n - 1, n);
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for j in 0..k {
            h[(k - 1, j)] = 1.0 / norm;
        }
        h[(k - 1, k)] = -(k as f64) / norm;
    }
    h
}

/// Fits a Saab layer on samples stored one per row.
pub fn saab_fit(samples: &DMatrix<f64>, options: SaabFitOptions) -> Result<SaabLayer> {
    let (n, dim) = samples.shape();
    if n < 2 {
        return Err(Error::TooFew {
            requested: 2,
            available: n,
        });
    }
    if dim == 0 {
        return Err(Error::InvalidInput("samples have zero width".into()));
    }
    if !samples.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("samples contain non-finite values".into()));
    }
    let nf = n as f64;
    let inv_sqrt = 1.0 / (dim as f64).sqrt();

    let bias = samples.row_iter().map(|r| r.norm()).fold(0.0_f64, f64::max);

    let dc: Vec<f64> = samples.row_iter().map(|r| r.sum() * inv_sqrt).collect();
    let dc_mean = dc.iter().sum::<f64>() / nf;
    let dc_var = dc.iter().map(|c| (c - dc_mean).powi(2)).sum::<f64>() / nf;

    let dc_row = DMatrix::from_element(1, dim, inv_sqrt);
    if dim == 1 {
        return SaabLayer::from_parts(dc_row, bias, vec![1.0]);
    }

    // AC parts expressed in an orthonormal basis of the DC complement, so the
    // resulting filters are orthogonal to the DC filter by construction.
    let basis = ac_basis(dim);
    let coords = samples * basis.transpose();
    let mean = coords.row_mean();
    let mut cov = DMatrix::<f64>::zeros(dim - 1, dim - 1);
    let mut centered = vec![0.0; dim - 1];
    for r in 0..n {
        for (c, slot) in centered.iter_mut().enumerate() {
            *slot = coords[(r, c)] - mean[c];
        }
        for i in 0..dim - 1 {
            let ci = centered[i];
            for j in i..dim - 1 {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..dim - 1 {
        for j in i..dim - 1 {
            let v = cov[(i, j)] / nf;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim - 1).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let ac_vars: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let ac_total: f64 = ac_vars.iter().sum();
    if !(ac_total > 0.0) {
        return SaabLayer::from_parts(dc_row, bias, vec![1.0]);
    }

    let total = dc_var + ac_total;
    let mut energies = Vec::with_capacity(dim);
    energies.push(dc_var / total);
    energies.extend(ac_vars.iter().map(|v| v / total));

    // A keep ratio of 1 means every filter; rounding in the cumulative sum
    // must not drop the tail.
    let mut kept = if options.energy_keep >= 1.0 { dim } else { 0 };
    let mut cumulative = 0.0;
    while kept < dim {
        cumulative += energies[kept];
        kept += 1;
        if cumulative >= options.energy_keep {
            break;
        }
    }
    energies.truncate(kept);

    let mut filters = DMatrix::zeros(kept, dim);
    filters.row_mut(0).copy_from(&dc_row.row(0));
    for (row, &k) in order.iter().take(kept - 1).enumerate() {
        let mut a = (basis.transpose() * eig.eigenvectors.column(k)).normalize();
        // Canonical sign: largest-magnitude weight positive.
        if a[a.iamax()] < 0.0 {
            a.neg_mut();
        }
        filters.row_mut(row + 1).copy_from(&a.transpose());
    }
    SaabLayer::from_parts(filters, bias, energies)
}

/// One independent [`saab_fit`] per channel.
pub fn cw_saab_fit(per_channel: &[DMatrix<f64>], options: SaabFitOptions) -> Result<Vec<SaabLayer>> {
    per_channel
        .par_iter()
        .map(|samples| saab_fit(samples, options))
        .collect()
}

/// Applies a layer to every row of `samples`, returning one output row per input row.
pub fn saab_transform(layer: &SaabLayer, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if samples.ncols() != layer.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: layer.input_dim(),
            got: samples.ncols(),
        });
    }
    let mut out = DMatrix::zeros(samples.nrows(), layer.kept_dim());
    let mut v = vec![0.0; samples.ncols()];
    let mut y = vec![0.0; layer.kept_dim()];
    for r in 0..samples.nrows() {
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = samples[(r, c)];
        }
        layer.apply_into(&v, &mut y);
        for (c, val) in y.iter().enumerate() {
            out[(r, c)] = *val;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormality(layer: &SaabLayer) -> f64 {
        let f = layer.filters();
        (f * f.transpose() - DMatrix::identity(f.nrows(), f.nrows())).amax()
    }

    #[test]
    fn helmert_basis_is_orthonormal_complement() {
        for n in 2..10 {
            let h = ac_basis(n);
            assert!((&h * h.transpose() - DMatrix::identity(n - 1, n - 1)).amax() < 1e-14);
            assert!((&h * DVector::from_element(n, 1.0)).amax() < 1e-14);
        }
    }

    #[test]
    fn constant_samples_give_dc_only() {
        let samples = DMatrix::from_element(5, 4, 1.0);
        let layer = saab_fit(&samples, SaabFitOptions::default()).unwrap();
        assert_eq!(layer.kept_dim(), 1);
        assert_eq!(layer.energies(), &[1.0]);
        let y = layer.apply(&[1.0; 4]).unwrap();
        assert!((y[0] - layer.bias() - 2.0).abs() < 1e-12);
        assert_eq!(layer.dc_filter(), DVector::from_element(4, 0.5));
    }

    #[test]
    fn two_sample_hand_case() {
        let samples = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let layer = saab_fit(&samples, SaabFitOptions::default()).unwrap();
        assert_eq!(layer.kept_dim(), 2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for v in [[1.0, 0.0], [0.0, 1.0]] {
            let y = layer.apply(&v).unwrap();
            assert!((y[0] - layer.bias() - s).abs() < 1e-12);
        }
        let ac = layer.ac_filters();
        assert!((ac[(0, 0)].abs() - s).abs() < 1e-12);
        assert!((ac[(0, 0)] + ac[(0, 1)]).abs() < 1e-12);
        // DC coefficients are constant, so all energy is AC.
        assert_eq!(layer.energies(), &[0.0, 1.0]);
        assert_eq!(layer.bias(), 1.0);
    }

    #[test]
    fn errors() {
        assert!(saab_fit(&DMatrix::from_element(1, 3, 1.0), SaabFitOptions::default()).is_err());
        let mut s = DMatrix::from_element(3, 3, 1.0);
        s[(1, 1)] = f64::NAN;
        assert!(saab_fit(&s, SaabFitOptions::default()).is_err());
        let layer = saab_fit(
            &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            SaabFitOptions::default(),
        )
        .unwrap();
        assert!(layer.apply(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn energy_keep_truncates() {
        let samples = DMatrix::from_fn(40, 6, |r, c| ((r * 7 + c * 3) as f64).sin() * (c + 1) as f64);
        let full = saab_fit(&samples, SaabFitOptions::default()).unwrap();
        assert_eq!(full.kept_dim(), 6);
        assert!((full.energies().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(orthonormality(&full) < 1e-9);
        let part = saab_fit(&samples, SaabFitOptions { energy_keep: 0.5 }).unwrap();
        assert!(part.kept_dim() < 6);
        assert!(part.energies().iter().sum::<f64>() >= 0.5);
        assert_eq!(
            part.filters().rows(0, part.kept_dim()),
            full.filters().rows(0, part.kept_dim())
        );
    }

    #[test]
    fn zero_input_yields_bias() {
        let samples = DMatrix::from_fn(30, 5, |r, c| ((r + 1) as f64 * 0.31 + c as f64).cos());
        let layer = saab_fit(&samples, SaabFitOptions::default()).unwrap();
        assert!(layer.apply(&[0.0; 5]).unwrap().iter().all(|&y| y == layer.bias()));
    }
}

//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::frame::C64;

/// Eigenvalues of a Hermitian PSD matrix, sorted descending and clamped at 0.
pub(crate) fn hermitian_eigenvalues_desc(a: &DMatrix<C64>) -> Vec<f64> {
    let eig = a.clone().symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    vals.sort_by(|x, y| y.partial_cmp(x).unwrap());
    vals
}

// Relative spectral cutoff below which a frame operator is treated as
// singular (sigma_min / sigma_max < 1e-10).
const RANK_TOL_SQ: f64 = 1e-20;

/// (A)^(-1/2) for a Hermitian PSD matrix, via its eigendecomposition.
pub(crate) fn hermitian_inv_sqrt_psd(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(Error::RankDeficient);
    }
    let mut out = DMatrix::<C64>::zeros(a.nrows(), a.ncols());
    for k in 0..eig.eigenvalues.len() {
        let l = eig.eigenvalues[k];
        if l <= max * RANK_TOL_SQ {
            return Err(Error::RankDeficient);
        }
        let w = C64::new(1.0 / l.sqrt(), 0.0);
        let v = eig.eigenvectors.column(k);
        // out += w * v v^H
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                out[(i, j)] += w * v[i] * v[j].conj();
            }
        }
    }
    Ok(out)
}

/// Real-symmetric variant of [`hermitian_inv_sqrt_psd`]; keeps real frames
/// free of imaginary round-off.
pub(crate) fn real_inv_sqrt_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(Error::RankDeficient);
    }
    let mut out = DMatrix::<f64>::zeros(a.nrows(), a.ncols());
    for k in 0..eig.eigenvalues.len() {
        let l = eig.eigenvalues[k];
        if l <= max * RANK_TOL_SQ {
            return Err(Error::RankDeficient);
        }
        let w = 1.0 / l.sqrt();
        let v = eig.eigenvectors.column(k);
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                out[(i, j)] += w * v[i] * v[j];
            }
        }
    }
    Ok(out)
}

/// SplitMix64 step, used to derive independent sub-seeds deterministically.
pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a stream index.
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_add(0xA076_1D64_78BD_642F)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inv_sqrt_of_identity() {
        let a = DMatrix::<C64>::identity(3, 3);
        let r = hermitian_inv_sqrt_psd(&a).unwrap();
        assert!((&r - DMatrix::<C64>::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn derive_seed_is_stable_and_spread() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        assert_eq!(a, derive_seed(42, 0));
        assert_ne!(a, b);
    }
}

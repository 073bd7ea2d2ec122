//! Frame and Gram data types shared by all design engines: coherence and
//! bound computations, normalization, and the tight-frame retraction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = num_complex::Complex<f64>;

/// Scalar field of a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

/// An m x n matrix of unit-norm columns (the frame synthesis matrix).
///
/// Real frames keep all imaginary parts exactly zero; every operation that
/// produces a real frame re-establishes that invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    field: Field,
    data: DMatrix<C64>,
}

impl Frame {
    pub fn new(field: Field, data: DMatrix<C64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidDimensions("empty frame".into()));
        }
        if field == Field::Real && data.iter().any(|z| z.im != 0.0) {
            return Err(Error::InvalidDimensions(
                "real frame with nonzero imaginary part".into(),
            ));
        }
        Ok(Frame { field, data })
    }

    pub fn from_real(data: DMatrix<f64>) -> Self {
        Frame {
            field: Field::Real,
            data: data.map(|x| C64::new(x, 0.0)),
        }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn data(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn column(&self, i: usize) -> Vec<C64> {
        self.data.column(i).iter().copied().collect()
    }

    pub fn set_column(&mut self, i: usize, col: &[C64]) {
        assert_eq!(col.len(), self.rows());
        for (r, &v) in col.iter().enumerate() {
            self.data[(r, i)] = if self.field == Field::Real {
                C64::new(v.re, 0.0)
            } else {
                v
            };
        }
    }

    /// Real part of the data as an f64 matrix (valid for real frames).
    pub fn real_data(&self) -> DMatrix<f64> {
        self.data.map(|z| z.re)
    }

    pub fn column_norm(&self, i: usize) -> f64 {
        self.data.column(i).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Scales every column to unit Euclidean norm.
    pub fn normalize_columns(&mut self) -> Result<()> {
        for i in 0..self.cols() {
            let norm = self.column_norm(i);
            if norm <= f64::EPSILON {
                return Err(Error::DegenerateColumn(i));
            }
            let inv = 1.0 / norm;
            for r in 0..self.rows() {
                self.data[(r, i)] *= inv;
            }
        }
        Ok(())
    }

    pub fn normalized(&self) -> Result<Frame> {
        let mut out = self.clone();
        out.normalize_columns()?;
        Ok(out)
    }

    /// Gram matrix F^H F (n x n).
    pub fn gram(&self) -> DMatrix<C64> {
        self.data.adjoint() * &self.data
    }

    /// Frame operator F F^H (m x m).
    pub fn frame_operator(&self) -> DMatrix<C64> {
        &self.data * self.data.adjoint()
    }

    /// Largest off-diagonal Gram modulus of the frame as stored (columns are
    /// assumed unit norm; use [`coherence`] for the normalizing variant).
    pub fn max_cross_correlation(&self) -> f64 {
        let n = self.cols();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let g = self.inner(i, j).norm();
                if g > best {
                    best = g;
                }
            }
        }
        best
    }

    /// Inner product f_i^H f_j.
    pub fn inner(&self, i: usize, j: usize) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..self.rows() {
            acc += self.data[(r, i)].conj() * self.data[(r, j)];
        }
        acc
    }
}

/// Coherence, argmax pair, frame potential, and tightness diagnostics of a
/// frame, all computed from the column-normalized Gram.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GramSummary {
    pub coherence: f64,
    /// Index pair (i, j), i < j, attaining the coherence.
    pub argmax_pair: (usize, usize),
    /// Squared Frobenius norm of the Gram matrix (diagonal included).
    pub frame_potential: f64,
    /// The m eigenvalues of F F^H, descending. Their extremes are the frame
    /// bounds; they are carried as spectral diagnostics only.
    pub gram_eigenvalues: Vec<f64>,
    /// max_i |lambda_i - n/m| / (n/m); zero exactly for tight frames.
    pub tightness_gap: f64,
}

/// Computes the normalized mutual coherence and the full Gram summary.
///
/// Columns are normalized internally before the Gram product, so the result
/// is the scale-invariant coherence definition.
pub fn coherence(frame: &Frame) -> Result<GramSummary> {
    if frame.rows() == 0 || frame.cols() < 2 {
        return Err(Error::InvalidDimensions(format!(
            "coherence needs m >= 1 and n >= 2, got {}x{}",
            frame.rows(),
            frame.cols()
        )));
    }
    let normalized = frame.normalized()?;
    let gram = normalized.gram();
    let n = normalized.cols();
    let m = normalized.rows();

    let mut best = -1.0f64;
    let mut pair = (0, 1);
    let mut potential = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let g = gram[(i, j)].norm_sqr();
            potential += g;
            if j > i {
                let modulus = g.sqrt();
                if modulus > best {
                    best = modulus;
                    pair = (i, j);
                }
            }
        }
    }

    let eigenvalues = crate::linalg::hermitian_eigenvalues_desc(&normalized.frame_operator());
    let rho = n as f64 / m as f64;
    let tightness_gap = eigenvalues
        .iter()
        .map(|l| (l - rho).abs() / rho)
        .fold(0.0f64, f64::max);

    Ok(GramSummary {
        coherence: best.min(1.0).max(0.0),
        argmax_pair: pair,
        frame_potential: potential,
        gram_eigenvalues: eigenvalues,
        tightness_gap,
    })
}

/// The Welch lower bound sqrt((n-m)/(m(n-1))) on unit-norm frame coherence.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WelchBound {
    pub value: f64,
    /// Set when n > m^2, where the complex-case bound is not known to be
    /// attainable; the formula value is still reported as a reference.
    pub may_be_loose: bool,
}

pub fn welch_bound(m: usize, n: usize) -> Result<WelchBound> {
    if m == 0 || n < m {
        return Err(Error::InvalidDimensions(format!(
            "welch bound needs n >= m >= 1, got m = {m}, n = {n}"
        )));
    }
    if n == m {
        return Ok(WelchBound {
            value: 0.0,
            may_be_loose: false,
        });
    }
    let (mf, nf) = (m as f64, n as f64);
    Ok(WelchBound {
        value: ((nf - mf) / (mf * (nf - 1.0))).sqrt(),
        may_be_loose: n > m * m,
    })
}

/// Upper bound on the frame potential of a frame whose coherence is
/// gamma times the Welch bound: (n^2/m) * (gamma^2 - (gamma^2 - 1)/rho).
pub fn fp_upper_bound(m: usize, n: usize, gamma: f64) -> Result<f64> {
    if gamma < 1.0 {
        return Err(Error::BelowWelchBound(gamma));
    }
    if m == 0 || n < m {
        return Err(Error::InvalidDimensions(format!(
            "fp bound needs n >= m >= 1, got m = {m}, n = {n}"
        )));
    }
    let (mf, nf) = (m as f64, n as f64);
    let rho = nf / mf;
    let g2 = gamma * gamma;
    Ok(nf * nf / mf * (g2 - (g2 - 1.0) / rho))
}

/// The closest alpha-tight frame to `frame` in Frobenius norm: with
/// F = U S V^H, returns alpha * U V^H. Columns are not re-normalized.
pub fn tight_polar_factor(frame: &Frame, alpha: f64) -> Result<Frame> {
    let factor = match frame.field() {
        Field::Real => {
            let f = frame.real_data();
            let inv_sqrt = crate::linalg::real_inv_sqrt_psd(&(&f * f.transpose()))?;
            Frame::from_real(inv_sqrt * f * alpha)
        }
        Field::Complex => {
            let inv_sqrt = crate::linalg::hermitian_inv_sqrt_psd(&frame.frame_operator())?;
            Frame {
                field: Field::Complex,
                data: inv_sqrt * frame.data() * C64::new(alpha, 0.0),
            }
        }
    };
    Ok(factor)
}

/// Tight-frame retraction used between design sweeps: the unit polar
/// decomposition followed by column re-normalization.
pub fn polar_retraction(frame: &Frame, alpha: f64) -> Result<Frame> {
    let mut out = tight_polar_factor(frame, alpha)?;
    out.normalize_columns()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mercedes() -> Frame {
        // Three planar unit vectors at mutual angle 120 degrees.
        let sqrt3_2 = 3.0f64.sqrt() / 2.0;
        Frame::from_real(DMatrix::from_row_slice(
            2,
            3,
            &[0.0, -sqrt3_2, sqrt3_2, 1.0, -0.5, -0.5],
        ))
    }

    #[test]
    fn identity_frame_summary() {
        let f = Frame::from_real(DMatrix::identity(3, 3));
        let s = coherence(&f).unwrap();
        assert_eq!(s.coherence, 0.0);
        assert_relative_eq!(s.frame_potential, 3.0, max_relative = 1e-12);
        assert_relative_eq!(s.tightness_gap, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mercedes_benz_frame() {
        let s = coherence(&mercedes()).unwrap();
        assert_relative_eq!(s.coherence, 0.5, epsilon = 1e-12);
        assert!(s.tightness_gap < 1e-12);
        // FP = n + 2 * 3 pairs * 0.25 = 4.5 = n^2/m
        assert_relative_eq!(s.frame_potential, 4.5, epsilon = 1e-9);
    }

    #[test]
    fn coherence_rejects_degenerate_input() {
        let f = Frame::from_real(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        match coherence(&f) {
            Err(Error::DegenerateColumn(1)) => {}
            other => panic!("expected degenerate column error, got {other:?}"),
        }
        let g = Frame::from_real(DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
        assert!(matches!(coherence(&g), Err(Error::InvalidDimensions(_))));
    }

    #[test]
    fn welch_bound_values() {
        assert_relative_eq!(
            welch_bound(4, 7).unwrap().value,
            0.3535533905932738,
            epsilon = 1e-12
        );
        assert_eq!(welch_bound(5, 5).unwrap().value, 0.0);
        // sqrt(36/1764) = 1/7
        assert_relative_eq!(
            welch_bound(28, 64).unwrap().value,
            1.0 / 7.0,
            epsilon = 1e-12
        );
        assert!(welch_bound(4, 17).unwrap().may_be_loose);
        assert!(!welch_bound(4, 16).unwrap().may_be_loose);
        assert!(welch_bound(4, 3).is_err());
    }

    #[test]
    fn fp_bound_values() {
        assert_relative_eq!(fp_upper_bound(5, 10, 1.0).unwrap(), 20.0, epsilon = 1e-12);
        assert_relative_eq!(fp_upper_bound(5, 10, 1.2).unwrap(), 24.4, epsilon = 1e-12);
        assert!(fp_upper_bound(5, 10, 0.99).is_err());
        // bracket >= 1 for any gamma >= 1
        for g in [1.0, 1.5, 3.0] {
            assert!(fp_upper_bound(3, 12, g).unwrap() >= 48.0 - 1e-12);
        }
    }

    #[test]
    fn polar_retraction_fixes_tight_frames() {
        let f = mercedes();
        let r = polar_retraction(&f, 1.0).unwrap();
        for i in 0..3 {
            let dot: f64 = (0..2)
                .map(|k| (f.data()[(k, i)].conj() * r.data()[(k, i)]).re)
                .sum();
            assert_relative_eq!(dot.abs(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn polar_factor_equalizes_singular_values() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let data =
            DMatrix::from_fn(3, 6, |_, _| StandardNormal.sample(&mut rng));
        let mut f = Frame::from_real(data);
        f.normalize_columns().unwrap();
        let tight = tight_polar_factor(&f, 1.0).unwrap();
        let eig = crate::linalg::hermitian_eigenvalues_desc(&tight.frame_operator());
        for l in &eig {
            assert_relative_eq!(*l, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn polar_retraction_on_duplicated_directions() {
        // Exactly parallel columns stay parallel: the retraction is a left
        // multiplication, so [e1, e1, e2] keeps coherence 1 ...
        let dup = Frame::from_real(DMatrix::from_row_slice(
            2,
            3,
            &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ));
        let out = polar_retraction(&dup, 1.0).unwrap();
        assert_relative_eq!(
            coherence(&out).unwrap().coherence,
            1.0,
            epsilon = 1e-12
        );
        // ... while nearby non-parallel directions are pushed apart.
        let near = {
            let mut f = Frame::from_real(DMatrix::from_row_slice(
                2,
                3,
                &[1.0, 1.0, 0.0, 0.0, 0.1, 1.0],
            ));
            f.normalize_columns().unwrap();
            f
        };
        let before = coherence(&near).unwrap().coherence;
        let after = coherence(&polar_retraction(&near, 1.0).unwrap())
            .unwrap()
            .coherence;
        assert!(before > 0.99);
        assert!(after < before - 1e-4, "before {before}, after {after}");
    }

    #[test]
    fn rank_deficient_retraction_rejected() {
        let f = Frame::from_real(DMatrix::from_row_slice(
            2,
            3,
            &[1.0, 1.0, -1.0, 0.0, 0.0, 0.0],
        ));
        assert!(matches!(
            polar_retraction(&f, 1.0),
            Err(Error::RankDeficient)
        ));
    }

    #[test]
    fn coherence_invariant_under_column_phase_and_permutation() {
        let f = mercedes();
        let base = coherence(&f).unwrap().coherence;

        // permute columns
        let mut permuted = f.clone();
        let c0 = f.column(0);
        let c2 = f.column(2);
        permuted.set_column(0, &c2);
        permuted.set_column(2, &c0);
        assert_relative_eq!(
            coherence(&permuted).unwrap().coherence,
            base,
            epsilon = 1e-14
        );

        // unit-modulus rescaling (complex field so the phase survives)
        let mut rescaled = Frame::new(Field::Complex, f.data().clone()).unwrap();
        let phase = C64::from_polar(1.0, 1.234);
        let col: Vec<C64> = rescaled.column(1).iter().map(|z| z * phase).collect();
        rescaled.set_column(1, &col);
        assert_relative_eq!(
            coherence(&rescaled).unwrap().coherence,
            base,
            epsilon = 1e-14
        );
    }

    #[test]
    fn frame_potential_matches_eigenvalue_route() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let m = 2 + trial % 4;
            let n = m + 1 + trial % 7;
            let data = DMatrix::from_fn(m, n, |_, _| {
                C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            });
            let mut f = Frame::new(Field::Complex, data).unwrap();
            f.normalize_columns().unwrap();
            let s = coherence(&f).unwrap();
            let by_eig: f64 = s.gram_eigenvalues.iter().map(|l| l * l).sum();
            assert_relative_eq!(s.frame_potential, by_eig, epsilon = 1e-9);
            let eig_sum: f64 = s.gram_eigenvalues.iter().sum();
            assert_relative_eq!(eig_sum, n as f64, epsilon = 1e-9);
            assert!(s.frame_potential >= (n * n) as f64 / m as f64 - 1e-9);
        }
    }
}

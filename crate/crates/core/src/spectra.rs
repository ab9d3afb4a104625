//! Bare single-excitation spectrum and its bath-dressed counterpart.
//!
//! With a homogeneous effective coupling `G`, the states
//! `|Psi_k^n> = sum_l a_kl (|l,0> + (-1)^n |0,l>) / sqrt(2)` reduce the
//! `2N`-dimensional problem to `N` independent 2x2 blocks
//!
//! ```text
//! [ eps_k/2 - G     eps_k/2     ]
//! [ eps_k/2         eps_k/2 + G ]
//! ```
//!
//! whose eigenvalues are `E_k^n = (eps_k + (-1)^n Delta_k) / 2` with
//! `Delta_k = sqrt(4 G^2 + eps_k^2)`.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::HERMITIAN_TOL;
use crate::C64;

/// Relative size of `|eps_k|` below which a mode is treated as a zero mode.
pub const ZERO_MODE_TOL: f64 = 1e-12;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 100_000;

/// Eigenvalues `eps_k` (ascending) and eigenvectors `a_kl` of a hopping matrix.
///
/// Row `k` of [`eigenvectors`](Self::eigenvectors) holds the components of the
/// `k`-th eigenvector, `|psi_k> = sum_l a_kl |l,0>`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<C64>,
}

impl SpectralData {
    /// Assembles spectral data from an explicit eigenbasis (rows of
    /// `eigenvectors`). The basis must be orthonormal to `1e-10`.
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors: DMatrix<C64>) -> Result<Self> {
        let n = eigenvalues.len();
        if n == 0 || eigenvectors.shape() != (n, n) {
            return Err(Error::validation("eigenvector matrix must be N x N with N >= 1"));
        }
        let gram = &eigenvectors * eigenvectors.adjoint();
        let defect = (gram - DMatrix::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect > 1e-10 {
            return Err(Error::validation(format!(
                "eigenvectors are not orthonormal (defect {defect:e})"
            )));
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.eigenvectors
    }

    /// `a_kl` for 0-based mode `k` and 1-based site `l`.
    pub fn component(&self, mode: usize, site: usize) -> C64 {
        self.eigenvectors[(mode, site - 1)]
    }

    /// Spectral norm of the diagonalized matrix, `max_k |eps_k|`.
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    /// Rebuilds `sum_k eps_k |psi_k><psi_k|`.
    pub fn reconstruct(&self) -> DMatrix<C64> {
        let a = &self.eigenvectors;
        let mut scaled = a.clone();
        for (k, &e) in self.eigenvalues.iter().enumerate() {
            scaled.row_mut(k).scale_mut(e);
        }
        a.transpose() * scaled.map(|z| z.conj())
    }
}

/// Diagonalizes a Hermitian matrix.
///
/// Eigenvalues come out ascending; every eigenvector is rotated so that its
/// first non-negligible component is real and positive.
pub fn eigendecompose(h: &DMatrix<C64>) -> Result<SpectralData> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(Error::validation("matrix must be square and non-empty"));
    }
    let scale = h.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    for r in 0..n {
        for c in r..n {
            if (h[(r, c)] - h[(c, r)].conj()).norm() > HERMITIAN_TOL * scale {
                return Err(Error::validation("matrix is not Hermitian"));
            }
        }
    }

    let eig = SymmetricEigen::try_new(h.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or(Error::Eigensolver)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(i);
        let pivot = col.iter().copied().find(|z| z.norm() > 1e-10).unwrap_or(C64::new(1.0, 0.0));
        let phase = pivot.conj() / pivot.norm();
        for l in 0..n {
            eigenvectors[(k, l)] = col[l] * phase;
        }
    }
    Ok(SpectralData {
        eigenvalues,
        eigenvectors,
    })
}

/// Couplings `J_l = sqrt(l (N - l))`, `l = 1..N-1`, for perfect transfer along
/// an `N`-site chain. With `rescale_to`, they are scaled to sum to that value.
pub fn engineered_couplings(n_sites: usize, rescale_to: Option<f64>) -> Result<Vec<f64>> {
    if n_sites < 2 {
        return Err(Error::validation(format!(
            "engineered chain needs at least 2 sites, got {n_sites}"
        )));
    }
    let mut j: Vec<f64> = (1..n_sites).map(|l| ((l * (n_sites - l)) as f64).sqrt()).collect();
    if let Some(total) = rescale_to {
        if !total.is_finite() {
            return Err(Error::validation("rescale target must be finite"));
        }
        let factor = total / j.iter().sum::<f64>();
        j.iter_mut().for_each(|x| *x *= factor);
    }
    Ok(j)
}

/// One 2x2 block of the dressed problem. Index `0`/`1` of each array is the
/// branch `n` with energy `(eps + Delta)/2` / `(eps - Delta)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DressedMode {
    pub epsilon: f64,
    pub delta: f64,
    pub energy: [f64; 2],
    /// `c_kn`; may vanish on a zero mode.
    pub norm: [f64; 2],
    /// `<l,0|E_k^n> = chain_factor[n] * a_kl`.
    pub chain_factor: [f64; 2],
    /// `<0,l|E_k^n> = bath_factor[n] * a_kl`.
    pub bath_factor: [f64; 2],
    /// `eps_k` was below the zero-mode threshold; the block eigenvectors are
    /// `|Psi_k^1>` (upper branch) and `|Psi_k^0>` (lower branch).
    pub zero_mode: bool,
}

/// Spectrum of chain plus homogeneous effective baths.
#[derive(Debug, Clone, PartialEq)]
pub struct DressedSpectrum {
    g_eff: f64,
    bare: SpectralData,
    modes: Vec<DressedMode>,
}

impl DressedSpectrum {
    pub fn g_eff(&self) -> f64 {
        self.g_eff
    }

    pub fn bare(&self) -> &SpectralData {
        &self.bare
    }

    pub fn modes(&self) -> &[DressedMode] {
        &self.modes
    }

    pub fn n_sites(&self) -> usize {
        self.bare.n_sites()
    }

    /// All `2N` dressed energies, mode-major, upper branch first.
    pub fn energies(&self) -> Vec<f64> {
        self.modes.iter().flat_map(|m| m.energy).collect()
    }

    /// `<l,0|E_k^n>` for 0-based mode `k`, branch `n` and 1-based site `l`.
    pub fn chain_overlap(&self, mode: usize, branch: usize, site: usize) -> C64 {
        self.bare.component(mode, site) * self.modes[mode].chain_factor[branch]
    }

    /// `<0,l|E_k^n>`, the overlap with the effective bath spin of site `l`.
    pub fn bath_overlap(&self, mode: usize, branch: usize, site: usize) -> C64 {
        self.bare.component(mode, site) * self.modes[mode].bath_factor[branch]
    }
}

/// Dresses the bare spectrum with a homogeneous effective bath coupling `G`.
pub fn dress(spec: &SpectralData, g_eff: f64) -> Result<DressedSpectrum> {
    if !(g_eff.is_finite() && g_eff >= 0.0) {
        return Err(Error::validation(format!("bath coupling must be >= 0, got {g_eff}")));
    }
    let threshold = ZERO_MODE_TOL * spec.spectral_norm().max(1.0);
    let g2 = 2.0 * g_eff;
    let modes = spec
        .eigenvalues
        .iter()
        .map(|&eps| {
            let delta = (g2 * g2 + eps * eps).sqrt();
            let energy = [0.5 * (eps + delta), 0.5 * (eps - delta)];
            // (-1)^n Delta - 2G; the upper branch written without cancellation.
            let upper = if delta + g2 > 0.0 { eps * eps / (delta + g2) } else { 0.0 };
            let x = [upper, -delta - g2];
            let norm = x.map(|xn| xn.hypot(eps));
            let zero_mode = eps.abs() <= threshold;
            let (chain_factor, bath_factor) = if zero_mode {
                ([FRAC_1_SQRT_2, FRAC_1_SQRT_2], [-FRAC_1_SQRT_2, FRAC_1_SQRT_2])
            } else {
                let s = FRAC_1_SQRT_2;
                (
                    [s * (x[0] + eps) / norm[0], s * (x[1] + eps) / norm[1]],
                    [s * (x[0] - eps) / norm[0], s * (x[1] - eps) / norm[1]],
                )
            };
            DressedMode {
                epsilon: eps,
                delta,
                energy,
                norm,
                chain_factor,
                bath_factor,
                zero_mode,
            }
        })
        .collect();
    Ok(DressedSpectrum {
        g_eff,
        bare: spec.clone(),
        modes,
    })
}

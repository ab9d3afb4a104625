//! Brute-force reference for the first excitation sector.
//!
//! Every bath spin is kept as its own basis state: the sector has dimension
//! `D = N + sum_l M_l`, with the chain states `|l,0>` first and the bath
//! states `sigma_k^+(l)|0,0>` after them, site-major. The matrix is
//! diagonalized once and propagated by phases, with no reduction to
//! effective bath spins and no assumption on the `G_l`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::dynamics::{exact_transfer, Formula, TransferSeries};
use crate::error::{Error, Result};
use crate::model::{check_site, matrix_fingerprint, BathSpec, ChainSpec, SiteBath};
use crate::spectra::{dress, eigendecompose, SpectralData};
use crate::C64;

/// Largest sector dimension the dense oracle accepts.
pub const MAX_DIMENSION: usize = 2000;

/// Range of the raw bath couplings drawn by [`random_bath`] before rescaling.
pub const RANDOM_COUPLING_RANGE: (f64, f64) = (0.2, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct FullSectorHamiltonian {
    n_sites: usize,
    /// 1-based chain site owning each bath state.
    bath_owner: Vec<usize>,
    matrix: DMatrix<C64>,
}

impl FullSectorHamiltonian {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn bath_owner(&self) -> &[usize] {
        &self.bath_owner
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn propagator(&self) -> Result<FullPropagator> {
        Ok(FullPropagator {
            n_sites: self.n_sites,
            spectrum: eigendecompose(&self.matrix)?,
            hash: matrix_fingerprint(&self.matrix),
        })
    }
}

/// Builds the full single-excitation Hamiltonian of chain plus baths.
///
/// A site whose bath is only known through `G_l` gets one bath spin with
/// coupling `G_l` (none when `G_l = 0`).
pub fn build_full(chain: &ChainSpec, bath: &BathSpec) -> Result<FullSectorHamiltonian> {
    let n = chain.n_sites();
    if bath.n_sites() != n {
        return Err(Error::validation(format!(
            "bath spec covers {} sites, chain has {n}",
            bath.n_sites()
        )));
    }
    let spins: Vec<Vec<f64>> = bath
        .sites()
        .iter()
        .map(|s| match s {
            SiteBath::Spins(g) => g.clone(),
            SiteBath::Effective(g) if *g > 0.0 => vec![*g],
            SiteBath::Effective(_) => Vec::new(),
        })
        .collect();
    let dimension = n + spins.iter().map(Vec::len).sum::<usize>();
    if dimension > MAX_DIMENSION {
        return Err(Error::DimensionCap {
            dimension,
            cap: MAX_DIMENSION,
        });
    }

    let mut matrix = DMatrix::zeros(dimension, dimension);
    matrix.view_mut((0, 0), (n, n)).copy_from(&chain.hopping_matrix());
    let mut bath_owner = Vec::with_capacity(dimension - n);
    let mut row = n;
    for (l, g) in spins.iter().enumerate() {
        for &gk in g {
            matrix[(row, l)] = C64::new(-gk, 0.0);
            matrix[(l, row)] = C64::new(-gk, 0.0);
            bath_owner.push(l + 1);
            row += 1;
        }
    }
    Ok(FullSectorHamiltonian {
        n_sites: n,
        bath_owner,
        matrix,
    })
}

/// Diagonalized full-sector Hamiltonian.
#[derive(Debug, Clone)]
pub struct FullPropagator {
    n_sites: usize,
    spectrum: SpectralData,
    hash: u64,
}

impl FullPropagator {
    pub fn spectrum(&self) -> &SpectralData {
        &self.spectrum
    }

    /// `e^{-iHt}|source,0>` over all `D` basis states.
    pub fn state(&self, source: usize, t: f64) -> Result<Vec<C64>> {
        check_site(source, self.n_sites)?;
        let a = self.spectrum.eigenvectors();
        let d = a.nrows();
        let mut psi = vec![C64::new(0.0, 0.0); d];
        for (k, &e) in self.spectrum.eigenvalues().iter().enumerate() {
            let c = C64::from_polar(1.0, -e * t) * a[(k, source - 1)].conj();
            for (j, p) in psi.iter_mut().enumerate() {
                *p += a[(k, j)] * c;
            }
        }
        Ok(psi)
    }

    /// `<target,0| e^{-iHt} |source,0>` on a time grid.
    pub fn transfer(&self, source: usize, target: usize, times: &[f64]) -> Result<TransferSeries> {
        check_site(source, self.n_sites)?;
        check_site(target, self.n_sites)?;
        let spec = &self.spectrum;
        let terms = spec
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(k, &e)| (spec.component(k, target) * spec.component(k, source).conj(), e))
            .collect();
        Ok(TransferSeries {
            times: times.to_vec(),
            amplitudes: crate::dynamics::PhaseSum::new(terms).on(times),
            source,
            target,
            formula: Formula::Oracle,
            g_eff: None,
            chain_hash: self.hash,
        })
    }
}

/// Chain-to-chain amplitude from the full sector, no approximation.
pub fn oracle_transfer(
    full: &FullSectorHamiltonian,
    source: usize,
    target: usize,
    times: &[f64],
) -> Result<TransferSeries> {
    check_site(source, full.n_sites)?;
    check_site(target, full.n_sites)?;
    full.propagator()?.transfer(source, target, times)
}

/// `max_t |oracle - exact(G = <G_l>)|` for the end-to-end pair `(1, N)`.
pub fn inhomogeneity_deviation(chain: &ChainSpec, bath: &BathSpec, times: &[f64]) -> Result<f64> {
    let n = chain.n_sites();
    let oracle = oracle_transfer(&build_full(chain, bath)?, 1, n, times)?;
    let dressed = dress(&eigendecompose(&chain.hopping_matrix())?, bath.mean_effective_coupling())?;
    let exact = exact_transfer(&dressed, 1, n, times)?;
    Ok(oracle.sup_distance(&exact))
}

/// Random bath with `spins_per_site[l]` spins on site `l + 1`, couplings
/// drawn from [`RANDOM_COUPLING_RANGE`] and rescaled so that `G_l` equals
/// `targets[l]`.
pub fn random_bath<R: Rng + ?Sized>(rng: &mut R, spins_per_site: &[usize], targets: &[f64]) -> Result<BathSpec> {
    if spins_per_site.len() != targets.len() {
        return Err(Error::validation("spin counts and target couplings differ in length"));
    }
    let (lo, hi) = RANDOM_COUPLING_RANGE;
    let per_site = spins_per_site
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(l, (&m, &target))| {
            if m == 0 {
                return if target == 0.0 {
                    Ok(Vec::new())
                } else {
                    Err(Error::validation(format!("site {} has no bath spins but G = {target}", l + 1)))
                };
            }
            let raw: Vec<f64> = (0..m).map(|_| rng.random_range(lo..hi)).collect();
            let norm = raw.iter().map(|g| g * g).sum::<f64>().sqrt();
            Ok(raw.into_iter().map(|g| g * target / norm).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    BathSpec::from_couplings(per_site)
}

/// Site couplings `G_l = mean (1 + spread u_l)` with a random zero-mean
/// pattern `u` normalized to `max |u_l| = 1`, so that
/// `max_l |G_l - mean| = spread * mean`.
pub fn spread_couplings<R: Rng + ?Sized>(rng: &mut R, n_sites: usize, mean: f64, spread: f64) -> Vec<f64> {
    if n_sites < 2 {
        return vec![mean; n_sites];
    }
    let mut u: Vec<f64> = (0..n_sites).map(|_| rng.random_range(-1.0..1.0)).collect();
    let centre = u.iter().sum::<f64>() / n_sites as f64;
    u.iter_mut().for_each(|x| *x -= centre);
    let scale = u.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    u.into_iter().map(|x| mean * (1.0 + spread * x / scale)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{bare_transfer, TimeGrid};
    use crate::model::homogenize;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn re(m: &DMatrix<C64>) -> Vec<f64> {
        m.transpose().iter().map(|z| z.re).collect()
    }

    #[test]
    fn build_examples() {
        let gamma = 0.7;
        let single = build_full(
            &ChainSpec::uniform(1, 1.0).unwrap(),
            &BathSpec::from_couplings(vec![vec![gamma]]).unwrap(),
        )
        .unwrap();
        assert_eq!(re(single.matrix()), vec![0.0, -gamma, -gamma, 0.0]);

        let pair = ChainSpec::uniform(2, 1.0).unwrap();
        let bare = build_full(&pair, &BathSpec::none(2).unwrap()).unwrap();
        assert_eq!(re(bare.matrix()), vec![0.0, -1.0, -1.0, 0.0]);

        let with_bath = build_full(&pair, &BathSpec::from_couplings(vec![vec![3.0, 4.0], vec![]]).unwrap()).unwrap();
        assert_eq!(with_bath.dimension(), 4);
        assert_eq!(with_bath.bath_owner(), &[1, 1]);
        let eig = with_bath.propagator().unwrap().spectrum().eigenvalues().to_vec();
        let sum_sq: f64 = eig.iter().map(|e| e * e).sum();
        assert_abs_diff_eq!(sum_sq, 2.0 * (1.0 + 9.0 + 16.0), epsilon = 1e-10);
        for (a, b) in eig.iter().zip(eig.iter().rev()) {
            assert_abs_diff_eq!(*a, -*b, epsilon = 1e-12);
        }
    }

    #[test]
    fn effective_only_bath_gets_one_spin() {
        let full = build_full(
            &ChainSpec::uniform(3, 1.0).unwrap(),
            &BathSpec::from_effective(vec![1.0, 0.0, 2.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(full.dimension(), 5);
        assert_eq!(full.bath_owner(), &[1, 3]);
    }

    #[test]
    fn dimension_cap() {
        let chain = ChainSpec::uniform(2, 1.0).unwrap();
        let bath = BathSpec::from_couplings(vec![vec![0.01; 1000], vec![0.01; 998]]).unwrap();
        assert_eq!(build_full(&chain, &bath).unwrap().dimension(), 2000);
        let bath = BathSpec::from_couplings(vec![vec![0.01; 1000], vec![0.01; 1000]]).unwrap();
        assert_eq!(
            build_full(&chain, &bath).unwrap_err(),
            Error::DimensionCap { dimension: 2002, cap: MAX_DIMENSION }
        );
    }

    #[test]
    fn site_count_mismatch() {
        let chain = ChainSpec::uniform(3, 1.0).unwrap();
        assert!(build_full(&chain, &BathSpec::none(2).unwrap()).is_err());
    }

    #[test]
    fn no_bath_matches_bare() {
        let chain = ChainSpec::from_couplings(vec![1.0, 0.4, 1.2]).unwrap();
        let full = build_full(&chain, &BathSpec::none(4).unwrap()).unwrap();
        let times = TimeGrid::new(20.0, 0.1).unwrap().times();
        let oracle = oracle_transfer(&full, 1, 4, &times).unwrap();
        let bare = bare_transfer(&eigendecompose(&chain.hopping_matrix()).unwrap(), 1, 4, &times).unwrap();
        assert!(oracle.sup_distance(&bare) <= 1e-10);
        assert_eq!(oracle.amplitudes[0], C64::new(0.0, 0.0));
        assert!(oracle_transfer(&full, 5, 1, &times).is_err());
    }

    #[test]
    fn homogeneous_bath_matches_exact_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let times = TimeGrid::new(20.0, 0.05).unwrap().times();
        for n in 2..=6 {
            let chain = ChainSpec::uniform(n, 1.0).unwrap();
            let counts: Vec<usize> = (0..n).map(|l| 1 + l % 3).collect();
            let bath = random_bath(&mut rng, &counts, &vec![1.0; n]).unwrap();
            let g = homogenize(&bath, 1e-9).unwrap().g_eff();
            let dressed = dress(&eigendecompose(&chain.hopping_matrix()).unwrap(), g).unwrap();
            let full = build_full(&chain, &bath).unwrap();
            for (src, dst) in [(1, n), (1, 1), (2, n - 1)] {
                let oracle = oracle_transfer(&full, src, dst, &times).unwrap();
                let exact = exact_transfer(&dressed, src, dst, &times).unwrap();
                assert!(oracle.sup_distance(&exact) <= 1e-9, "n={n} ({src},{dst})");
            }
        }
    }

    #[test]
    fn full_state_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chain = ChainSpec::from_couplings(vec![1.0, 0.5, 0.8]).unwrap();
        let bath = random_bath(&mut rng, &[2, 1, 3, 4], &[0.5, 1.0, 1.5, 0.2]).unwrap();
        let prop = build_full(&chain, &bath).unwrap().propagator().unwrap();
        for t in [0.0, 1.0, 7.3, 40.0] {
            let psi = prop.state(2, t).unwrap();
            let p: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            assert_abs_diff_eq!(p, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn random_bath_hits_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bath = random_bath(&mut rng, &[1, 4, 0], &[2.0, 0.5, 0.0]).unwrap();
        let g = bath.effective_couplings();
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g[1], 0.5, epsilon = 1e-14);
        assert_eq!(g[2], 0.0);
        assert!(random_bath(&mut rng, &[0], &[1.0]).is_err());
    }

    #[test]
    fn spread_pattern_has_requested_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = spread_couplings(&mut rng, 10, 4.0, 0.05);
        let mean = g.iter().sum::<f64>() / 10.0;
        assert_abs_diff_eq!(mean, 4.0, epsilon = 1e-12);
        let spread = g.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
        assert_abs_diff_eq!(spread, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn zero_spread_deviation_vanishes() {
        let chain = ChainSpec::uniform(5, 1.0).unwrap();
        let bath = BathSpec::homogeneous(5, 4.0).unwrap();
        let times = TimeGrid::new(40.0, 0.05).unwrap().times();
        assert!(inhomogeneity_deviation(&chain, &bath, &times).unwrap() <= 1e-9);
    }
}

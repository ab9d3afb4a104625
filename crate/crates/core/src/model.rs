//! Chain and bath specifications.
//!
//! A chain is either a nearest-neighbour XX chain given by its couplings `J_l`
//! or an arbitrary excitation-conserving network given by its Hermitian
//! single-excitation hopping matrix. Each chain site `l` couples to its own
//! bath of `M_l` spins; in the first excitation sector the whole bath acts
//! through one effective spin with coupling `G_l = sqrt(sum_k g_k^2)`.
//!
//! Site indices in the public API are 1-based.

use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::C64;

/// Default relative tolerance below which a bath counts as exactly homogeneous.
pub const DEFAULT_HOMOGENEITY_TOL: f64 = 1e-9;

/// Relative tolerance for the Hermiticity check of a hopping matrix.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
enum Couplings {
    NearestNeighbor(Vec<f64>),
    Hopping(DMatrix<C64>),
}

/// The isolated spin network, restricted to one excitation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    n_sites: usize,
    couplings: Couplings,
}

impl ChainSpec {
    /// Open chain with `couplings.len() + 1` sites.
    pub fn from_couplings(couplings: Vec<f64>) -> Result<Self> {
        if let Some((i, j)) = couplings.iter().enumerate().find(|(_, j)| !j.is_finite()) {
            return Err(Error::validation(format!("coupling J[{}] = {j} is not finite", i + 1)));
        }
        Ok(Self {
            n_sites: couplings.len() + 1,
            couplings: Couplings::NearestNeighbor(couplings),
        })
    }

    /// Uniform chain, `J_l = coupling` for every bond.
    pub fn uniform(n_sites: usize, coupling: f64) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::validation("chain needs at least one site"));
        }
        Self::from_couplings(vec![coupling; n_sites - 1])
    }

    /// Chain with `J_l = sqrt(l (N - l))`, optionally rescaled so that the
    /// couplings sum to `rescale_to`.
    pub fn engineered(n_sites: usize, rescale_to: Option<f64>) -> Result<Self> {
        Self::from_couplings(crate::spectra::engineered_couplings(n_sites, rescale_to)?)
    }

    /// General network from its Hermitian hopping matrix.
    pub fn from_hopping(hopping: DMatrix<C64>) -> Result<Self> {
        let n = hopping.nrows();
        if n == 0 || hopping.ncols() != n {
            return Err(Error::validation(format!(
                "hopping matrix must be square and non-empty, got {}x{}",
                hopping.nrows(),
                hopping.ncols()
            )));
        }
        if hopping.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::validation("hopping matrix has non-finite entries"));
        }
        check_hermitian(&hopping)?;
        Ok(Self {
            n_sites: n,
            couplings: Couplings::Hopping(hopping),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Nearest-neighbour couplings, if this spec was built from them.
    pub fn couplings(&self) -> Option<&[f64]> {
        match &self.couplings {
            Couplings::NearestNeighbor(j) => Some(j),
            Couplings::Hopping(_) => None,
        }
    }

    /// Single-excitation hopping matrix `h` with `H_S |l,0> = sum_l' h_{l'l} |l',0>`.
    ///
    /// For a chain, `h_{l,l+1} = h_{l+1,l} = -J_l` and the diagonal is zero.
    pub fn hopping_matrix(&self) -> DMatrix<C64> {
        match &self.couplings {
            Couplings::NearestNeighbor(j) => {
                let n = self.n_sites;
                let mut h = DMatrix::zeros(n, n);
                for (l, &jl) in j.iter().enumerate() {
                    h[(l, l + 1)] = C64::new(-jl, 0.0);
                    h[(l + 1, l)] = C64::new(-jl, 0.0);
                }
                h
            }
            Couplings::Hopping(h) => h.clone(),
        }
    }

    /// Stable fingerprint of the hopping matrix, used to tag output series.
    pub fn fingerprint(&self) -> u64 {
        matrix_fingerprint(&self.hopping_matrix())
    }

    /// Checks that a 1-based site index belongs to this chain.
    pub fn check_site(&self, site: usize) -> Result<()> {
        check_site(site, self.n_sites)
    }
}

pub(crate) fn check_site(site: usize, n_sites: usize) -> Result<()> {
    if site == 0 || site > n_sites {
        Err(Error::SiteIndex {
            index: site,
            n_sites,
        })
    } else {
        Ok(())
    }
}

pub(crate) fn matrix_fingerprint(h: &DMatrix<C64>) -> u64 {
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    h.nrows().hash(&mut hasher);
    for z in h.iter() {
        z.re.to_bits().hash(&mut hasher);
        z.im.to_bits().hash(&mut hasher);
    }
    hasher.finish()
}

fn check_hermitian(h: &DMatrix<C64>) -> Result<()> {
    let scale = h.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let n = h.nrows();
    for r in 0..n {
        for c in r..n {
            let defect = (h[(r, c)] - h[(c, r)].conj()).norm();
            if defect > HERMITIAN_TOL * scale {
                return Err(Error::validation(format!(
                    "hopping matrix is not Hermitian at ({}, {}): defect {defect:e}",
                    r + 1,
                    c + 1
                )));
            }
        }
    }
    Ok(())
}

/// The bath attached to one chain site.
#[derive(Debug, Clone, PartialEq)]
pub enum SiteBath {
    /// Individual bath-spin couplings `g_k`.
    Spins(Vec<f64>),
    /// Only the effective coupling `G_l` is known.
    Effective(f64),
}

impl SiteBath {
    pub fn effective_coupling(&self) -> f64 {
        match self {
            SiteBath::Spins(g) => root_sum_squares(g),
            SiteBath::Effective(g) => *g,
        }
    }
}

/// Independent baths, one per chain site.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    sites: Vec<SiteBath>,
}

impl BathSpec {
    /// Baths from individual couplings; entry `l` lists `g_k^(l)` for site `l + 1`.
    pub fn from_couplings(per_site: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_sites(per_site.into_iter().map(SiteBath::Spins).collect())
    }

    /// Baths given only through their effective couplings `G_l`.
    pub fn from_effective(per_site: Vec<f64>) -> Result<Self> {
        Self::from_sites(per_site.into_iter().map(SiteBath::Effective).collect())
    }

    pub fn from_sites(sites: Vec<SiteBath>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::validation("bath spec needs at least one site"));
        }
        for (l, site) in sites.iter().enumerate() {
            match site {
                SiteBath::Spins(g) if g.iter().any(|x| !x.is_finite()) => {
                    return Err(Error::validation(format!(
                        "bath couplings of site {} are not finite",
                        l + 1
                    )));
                }
                SiteBath::Effective(g) if !(g.is_finite() && *g >= 0.0) => {
                    return Err(Error::validation(format!(
                        "effective bath coupling of site {} must be finite and >= 0, got {g}",
                        l + 1
                    )));
                }
                _ => {}
            }
        }
        Ok(Self { sites })
    }

    /// Every site coupled with the same effective strength `g`.
    pub fn homogeneous(n_sites: usize, g: f64) -> Result<Self> {
        Self::from_effective(vec![g; n_sites])
    }

    /// No bath spins at all.
    pub fn none(n_sites: usize) -> Result<Self> {
        Self::from_couplings(vec![Vec::new(); n_sites])
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[SiteBath] {
        &self.sites
    }

    /// `G_l` for every site, in site order.
    pub fn effective_couplings(&self) -> Vec<f64> {
        self.sites.iter().map(SiteBath::effective_coupling).collect()
    }

    /// Mean of the effective couplings, `<G_l>`.
    pub fn mean_effective_coupling(&self) -> f64 {
        let g = self.effective_couplings();
        if g.iter().all(|&x| x == g[0]) {
            return g[0];
        }
        g.iter().sum::<f64>() / g.len() as f64
    }
}

/// Effective coupling `G` shared by every site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousBath {
    g_eff: f64,
}

impl HomogeneousBath {
    pub fn new(g_eff: f64) -> Result<Self> {
        if !(g_eff.is_finite() && g_eff >= 0.0) {
            return Err(Error::validation(format!(
                "effective bath coupling must be finite and >= 0, got {g_eff}"
            )));
        }
        Ok(Self { g_eff })
    }

    pub fn g_eff(&self) -> f64 {
        self.g_eff
    }
}

/// `G_l = sqrt(sum_k (g_k^(l))^2)` for the 1-based `site`.
pub fn effective_bath_coupling(bath: &BathSpec, site: usize) -> Result<f64> {
    check_site(site, bath.n_sites())?;
    Ok(bath.sites[site - 1].effective_coupling())
}

/// Reduces `bath` to a single `G = <G_l>` provided every `G_l` lies within
/// `rel_tol * <G_l>` of the mean.
pub fn homogenize(bath: &BathSpec, rel_tol: f64) -> Result<HomogeneousBath> {
    let g = bath.effective_couplings();
    let mean = bath.mean_effective_coupling();
    let spread = g.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    let allowed = rel_tol * mean;
    if spread > allowed {
        return Err(Error::Heterogeneous { spread, allowed });
    }
    HomogeneousBath::new(mean)
}

/// Summed in order of increasing magnitude, so the result does not depend on
/// the order or the signs of the entries.
fn root_sum_squares(g: &[f64]) -> f64 {
    let mut sq: Vec<f64> = g.iter().map(|x| x * x).collect();
    sq.sort_by(f64::total_cmp);
    sq.iter().sum::<f64>().sqrt()
}

/// The `2N`-dimensional Hamiltonian on `{|l,0>} ∪ {|0,l>}`: the chain block is
/// `h`, each chain site couples to its effective bath spin with `-G_l`.
pub fn effective_hamiltonian(hopping: &DMatrix<C64>, g_per_site: &[f64]) -> Result<DMatrix<C64>> {
    let n = hopping.nrows();
    if g_per_site.len() != n {
        return Err(Error::validation(format!(
            "{} effective couplings for {n} sites",
            g_per_site.len()
        )));
    }
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(hopping);
    for (l, &g) in g_per_site.iter().enumerate() {
        h[(l, n + l)] = C64::new(-g, 0.0);
        h[(n + l, l)] = C64::new(-g, 0.0);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn re(h: &DMatrix<C64>) -> Vec<f64> {
        h.transpose().iter().map(|z| z.re).collect()
    }

    #[test]
    fn effective_coupling_examples() {
        let bath = BathSpec::from_couplings(vec![vec![3.0, 4.0], vec![], vec![1.0; 4]]).unwrap();
        assert_eq!(effective_bath_coupling(&bath, 1).unwrap(), 5.0);
        assert_eq!(effective_bath_coupling(&bath, 2).unwrap(), 0.0);
        assert_eq!(effective_bath_coupling(&bath, 3).unwrap(), 2.0);
        assert_eq!(
            effective_bath_coupling(&bath, 4),
            Err(Error::SiteIndex { index: 4, n_sites: 3 })
        );
        assert!(effective_bath_coupling(&bath, 0).is_err());
    }

    #[test]
    fn homogenize_examples() {
        let exact = BathSpec::from_effective(vec![2.0, 2.0, 2.0]).unwrap();
        assert_eq!(homogenize(&exact, 0.0).unwrap().g_eff(), 2.0);

        let close = BathSpec::from_effective(vec![1.00, 1.02, 0.98]).unwrap();
        assert_abs_diff_eq!(homogenize(&close, 0.05).unwrap().g_eff(), 1.0, epsilon = 1e-15);

        let far = BathSpec::from_effective(vec![1.0, 3.0]).unwrap();
        match homogenize(&far, 0.1) {
            Err(Error::Heterogeneous { spread, .. }) => assert_eq!(spread, 1.0),
            other => panic!("expected heterogeneity error, got {other:?}"),
        }
    }

    #[test]
    fn homogenize_without_baths_is_zero() {
        let bath = BathSpec::none(4).unwrap();
        assert_eq!(homogenize(&bath, 0.0).unwrap().g_eff(), 0.0);
    }

    #[test]
    fn hopping_matrix_examples() {
        let h2 = ChainSpec::from_couplings(vec![1.0]).unwrap().hopping_matrix();
        assert_eq!(re(&h2), vec![0.0, -1.0, -1.0, 0.0]);

        let h3 = ChainSpec::from_couplings(vec![1.0, 2.0]).unwrap().hopping_matrix();
        assert_eq!(re(&h3), vec![0.0, -1.0, 0.0, -1.0, 0.0, -2.0, 0.0, -2.0, 0.0]);

        let h1 = ChainSpec::uniform(1, 1.0).unwrap().hopping_matrix();
        assert_eq!(h1.shape(), (1, 1));
        assert_eq!(h1[(0, 0)], C64::new(0.0, 0.0));
    }

    #[test]
    fn chain_and_hopping_representations_agree() {
        let chain = ChainSpec::from_couplings(vec![0.5, 1.5, -2.0]).unwrap();
        let general = ChainSpec::from_hopping(chain.hopping_matrix()).unwrap();
        assert_eq!(general.hopping_matrix(), chain.hopping_matrix());
        assert_eq!(general.fingerprint(), chain.fingerprint());
        assert!(general.couplings().is_none());
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(ChainSpec::uniform(0, 1.0).is_err());
        assert!(ChainSpec::from_couplings(vec![1.0, f64::NAN]).is_err());
        let mut h = DMatrix::<C64>::zeros(2, 2);
        h[(0, 1)] = C64::new(1.0, 0.5);
        h[(1, 0)] = C64::new(1.0, 0.5);
        assert!(matches!(ChainSpec::from_hopping(h.clone()), Err(Error::Validation(_))));
        h[(1, 0)] = C64::new(1.0, -0.5);
        assert!(ChainSpec::from_hopping(h).is_ok());
        assert!(ChainSpec::from_hopping(DMatrix::zeros(2, 3)).is_err());
        assert!(BathSpec::from_effective(vec![-1.0]).is_err());
        assert!(HomogeneousBath::new(f64::INFINITY).is_err());
    }

    #[test]
    fn effective_hamiltonian_layout() {
        let h = ChainSpec::uniform(2, 1.0).unwrap().hopping_matrix();
        let big = effective_hamiltonian(&h, &[3.0, 0.0]).unwrap();
        assert_eq!(
            re(&big),
            vec![
                0.0, -1.0, -3.0, 0.0, //
                -1.0, 0.0, 0.0, 0.0, //
                -3.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0,
            ]
        );
        assert!(effective_hamiltonian(&h, &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn hopping_matrix_is_hermitian(j in prop::collection::vec(-3.0f64..3.0, 0..12)) {
            let h = ChainSpec::from_couplings(j).unwrap().hopping_matrix();
            prop_assert_eq!(h.adjoint(), h);
        }

        #[test]
        fn effective_coupling_ignores_order_and_sign(
            g in prop::collection::vec(-2.0f64..2.0, 0..10),
            flips in prop::collection::vec(any::<bool>(), 10),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled: Vec<f64> = g
                .iter()
                .zip(&flips)
                .map(|(x, &f)| if f { -x } else { *x })
                .collect();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = BathSpec::from_couplings(vec![g]).unwrap();
            let b = BathSpec::from_couplings(vec![shuffled]).unwrap();
            prop_assert_eq!(
                effective_bath_coupling(&a, 1).unwrap(),
                effective_bath_coupling(&b, 1).unwrap()
            );
        }

        #[test]
        fn homogenize_returns_shared_coupling(g in 0.0f64..10.0, n in 1usize..20) {
            let bath = BathSpec::homogeneous(n, g).unwrap();
            prop_assert_eq!(homogenize(&bath, 0.0).unwrap().g_eff(), g);
        }
    }
}

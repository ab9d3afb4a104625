//! Transfer amplitudes on a time grid and peak location.
//!
//! All routes evaluate `f(t) = sum_j w_j exp(-i E_j t)` with a fixed term
//! order per time point, so parallel evaluation over the grid gives the same
//! bits as a sequential loop.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{check_site, matrix_fingerprint};
use crate::spectra::{DressedSpectrum, SpectralData};
use crate::C64;

/// Magnitudes at or below this are ignored when looking for the first peak.
pub const PEAK_FLOOR: f64 = 0.05;

/// Below this `|eps_k|` the weak-coupling bracket is replaced by `-t^2/2`.
pub const WEAK_ZERO_MODE_TOL: f64 = 1e-8;

/// Which formula produced a [`TransferSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formula {
    Bare,
    Exact,
    StrongApprox,
    WeakCorrected,
    Oracle,
}

impl Formula {
    pub fn tag(self) -> &'static str {
        match self {
            Formula::Bare => "bare",
            Formula::Exact => "exact",
            Formula::StrongApprox => "strong_approx",
            Formula::WeakCorrected => "weak_corrected",
            Formula::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "bare" => Formula::Bare,
            "exact" => Formula::Exact,
            "strong_approx" | "strong" => Formula::StrongApprox,
            "weak_corrected" | "weak" => Formula::WeakCorrected,
            "oracle" => Formula::Oracle,
            other => return Err(Error::validation(format!("unknown formula '{other}'"))),
        })
    }
}

/// Uniform grid `0, dt, 2 dt, ..., t_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_max: f64,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t_max: f64, dt: f64) -> Result<Self> {
        if !(t_max.is_finite() && t_max >= 0.0) {
            return Err(Error::validation(format!("t_max must be finite and >= 0, got {t_max}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::validation(format!("dt must be finite and > 0, got {dt}")));
        }
        Ok(Self { t_max, dt })
    }

    /// Step resolving both the `cos(Gt)` modulation and the chain dynamics:
    /// `dt = min(0.05 / max(1, G), 0.05 / ||h||)`.
    pub fn auto(t_max: f64, g_eff: f64, h_norm: f64) -> Result<Self> {
        let mut dt = 0.05 / g_eff.max(1.0);
        if h_norm > 0.0 {
            dt = dt.min(0.05 / h_norm);
        }
        Self::new(t_max, dt)
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        let steps = (self.t_max / self.dt + 1e-9).floor() as usize;
        let mut times: Vec<f64> = (0..=steps).map(|i| i as f64 * self.dt).collect();
        let last = *times.last().unwrap();
        if self.t_max - last > 1e-12 * self.t_max.max(1.0) {
            times.push(self.t_max);
        }
        times
    }
}

/// Transfer amplitudes `f_{target,source}(t_i)` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSeries {
    pub times: Vec<f64>,
    pub amplitudes: Vec<C64>,
    /// 1-based site the excitation starts on.
    pub source: usize,
    /// 1-based site the amplitude is measured on.
    pub target: usize,
    pub formula: Formula,
    /// Effective bath coupling, `None` for the isolated chain.
    pub g_eff: Option<f64>,
    /// Fingerprint of the hopping matrix (or full-sector matrix for the oracle).
    pub chain_hash: u64,
}

impl TransferSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm()).collect()
    }

    /// `max_i |f(t_i) - g(t_i)|`; both series must share the grid length.
    pub fn sup_distance(&self, other: &TransferSeries) -> f64 {
        assert_eq!(self.len(), other.len(), "series lengths differ");
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// A set of `(weight, energy)` terms for `sum_j w_j exp(-i E_j t)`.
#[derive(Debug, Clone)]
pub(crate) struct PhaseSum {
    terms: Vec<(C64, f64)>,
}

impl PhaseSum {
    pub(crate) fn new(terms: Vec<(C64, f64)>) -> Self {
        Self { terms }
    }

    pub(crate) fn at(&self, t: f64) -> C64 {
        self.terms
            .iter()
            .fold(C64::new(0.0, 0.0), |acc, &(w, e)| acc + w * C64::from_polar(1.0, -e * t))
    }

    pub(crate) fn on(&self, times: &[f64]) -> Vec<C64> {
        times.par_iter().map(|&t| self.at(t)).collect()
    }
}

fn bare_terms(spec: &SpectralData, source: usize, target: usize) -> PhaseSum {
    PhaseSum::new(
        spec.eigenvalues()
            .iter()
            .enumerate()
            .map(|(k, &e)| (spec.component(k, target) * spec.component(k, source).conj(), e))
            .collect(),
    )
}

fn spectral_hash(spec: &SpectralData) -> u64 {
    matrix_fingerprint(&spec.reconstruct())
}

/// Isolated-chain amplitude `f0(t) = sum_k exp(-i eps_k t) a_k,target conj(a_k,source)`.
pub fn bare_transfer(
    spec: &SpectralData,
    source: usize,
    target: usize,
    times: &[f64],
) -> Result<TransferSeries> {
    check_site(source, spec.n_sites())?;
    check_site(target, spec.n_sites())?;
    Ok(TransferSeries {
        times: times.to_vec(),
        amplitudes: bare_terms(spec, source, target).on(times),
        source,
        target,
        formula: Formula::Bare,
        g_eff: None,
        chain_hash: spectral_hash(spec),
    })
}

fn exact_terms(dressed: &DressedSpectrum, source: usize, target: usize) -> PhaseSum {
    let spec = dressed.bare();
    let mut terms = Vec::with_capacity(2 * spec.n_sites());
    for (k, mode) in dressed.modes().iter().enumerate() {
        let w = spec.component(k, target) * spec.component(k, source).conj();
        for b in 0..2 {
            terms.push((w * mode.chain_factor[b].powi(2), mode.energy[b]));
        }
    }
    PhaseSum::new(terms)
}

/// Chain amplitude with every site coupled to a bath of effective strength
/// `G`, summed over the `2N` dressed eigenstates.
pub fn exact_transfer(
    dressed: &DressedSpectrum,
    source: usize,
    target: usize,
    times: &[f64],
) -> Result<TransferSeries> {
    check_site(source, dressed.n_sites())?;
    check_site(target, dressed.n_sites())?;
    Ok(TransferSeries {
        times: times.to_vec(),
        amplitudes: exact_terms(dressed, source, target).on(times),
        source,
        target,
        formula: Formula::Exact,
        g_eff: Some(dressed.g_eff()),
        chain_hash: spectral_hash(dressed.bare()),
    })
}

/// The excitation started on `source`, at time `t`: amplitudes on every chain
/// site and on every effective bath spin (both 1-based site order).
pub fn exact_state(dressed: &DressedSpectrum, source: usize, t: f64) -> Result<(Vec<C64>, Vec<C64>)> {
    let n = dressed.n_sites();
    check_site(source, n)?;
    let spec = dressed.bare();
    let mut chain = vec![C64::new(0.0, 0.0); n];
    let mut bath = vec![C64::new(0.0, 0.0); n];
    for (k, mode) in dressed.modes().iter().enumerate() {
        let from = spec.component(k, source).conj();
        for b in 0..2 {
            let phase = C64::from_polar(1.0, -mode.energy[b] * t) * from * mode.chain_factor[b];
            for l in 1..=n {
                let a = spec.component(k, l) * phase;
                chain[l - 1] += a * mode.chain_factor[b];
                bath[l - 1] += a * mode.bath_factor[b];
            }
        }
    }
    Ok((chain, bath))
}

/// `(x e^x - e^x + 1) / eps^2` with `x = -i eps t`, i.e.
/// `exp(-i t eps)(-1/eps^2 - i t/eps) + 1/eps^2`, evaluated without
/// cancellation for small `eps t`.
fn weak_bracket(eps: f64, t: f64) -> C64 {
    if eps.abs() <= WEAK_ZERO_MODE_TOL {
        return C64::new(-0.5 * t * t, 0.0);
    }
    let x = C64::new(0.0, -eps * t);
    if x.norm() < 0.5 {
        // sum_{j>=2} (j-1) x^j / j!, divided by eps^2 termwise
        let mut sum = C64::new(0.0, 0.0);
        let mut power = C64::new(-t * t, 0.0); // x^2 / eps^2
        let mut factorial = 2.0;
        for j in 2..40 {
            let term = power * ((j - 1) as f64 / factorial);
            sum += term;
            if term.norm() <= 1e-18 * sum.norm() {
                break;
            }
            power *= x;
            factorial *= (j + 1) as f64;
        }
        sum
    } else {
        let e = x.exp();
        (x * e - e + 1.0) / (eps * eps)
    }
}

/// Leading `O(G^2)` change of the transfer amplitude:
/// `G^2 sum_k a_k,target conj(a_k,source) [exp(-i t eps_k)(-1/eps_k^2 - i t/eps_k) + 1/eps_k^2]`.
pub fn weak_correction(spec: &SpectralData, source: usize, target: usize, t: f64, g_eff: f64) -> Result<C64> {
    check_site(source, spec.n_sites())?;
    check_site(target, spec.n_sites())?;
    let sum = spec
        .eigenvalues()
        .iter()
        .enumerate()
        .fold(C64::new(0.0, 0.0), |acc, (k, &e)| {
            acc + spec.component(k, target) * spec.component(k, source).conj() * weak_bracket(e, t)
        });
    Ok(sum * (g_eff * g_eff))
}

/// Bare amplitude plus [`weak_correction`] on every grid point.
pub fn weak_corrected_transfer(
    spec: &SpectralData,
    source: usize,
    target: usize,
    times: &[f64],
    g_eff: f64,
) -> Result<TransferSeries> {
    let mut series = bare_transfer(spec, source, target, times)?;
    let corrections: Vec<C64> = times
        .par_iter()
        .map(|&t| weak_correction(spec, source, target, t, g_eff))
        .collect::<Result<_>>()?;
    for (a, c) in series.amplitudes.iter_mut().zip(corrections) {
        *a += c;
    }
    series.formula = Formula::WeakCorrected;
    series.g_eff = Some(g_eff);
    Ok(series)
}

/// Strong-coupling law `f(t) = cos(G t) f0(t/2)`.
///
/// `bare_half` holds `f0` sampled at `t_i / 2`; the result lives on `t_i`.
pub fn strong_coupling_approx(bare_half: &TransferSeries, g_eff: f64) -> Result<TransferSeries> {
    if bare_half.formula != Formula::Bare {
        return Err(Error::validation(format!(
            "strong-coupling law needs a bare series, got {}",
            bare_half.formula
        )));
    }
    if !(g_eff.is_finite() && g_eff > 0.0) {
        return Err(Error::validation(format!("strong-coupling law needs G > 0, got {g_eff}")));
    }
    let times: Vec<f64> = bare_half.times.iter().map(|t| 2.0 * t).collect();
    let amplitudes = times
        .iter()
        .zip(&bare_half.amplitudes)
        .map(|(t, f0)| f0 * (g_eff * t).cos())
        .collect();
    Ok(TransferSeries {
        times,
        amplitudes,
        formula: Formula::StrongApprox,
        g_eff: Some(g_eff),
        ..bare_half.clone()
    })
}

/// Evaluates `f0` at half the requested times and applies [`strong_coupling_approx`].
pub fn strong_coupling_transfer(
    spec: &SpectralData,
    source: usize,
    target: usize,
    times: &[f64],
    g_eff: f64,
) -> Result<TransferSeries> {
    let half: Vec<f64> = times.iter().map(|t| 0.5 * t).collect();
    strong_coupling_approx(&bare_transfer(spec, source, target, &half)?, g_eff)
}

/// A maximum of `|f|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub time: f64,
    pub magnitude: f64,
}

/// Vertex of the parabola through three samples; falls back to the middle
/// sample when the samples are not concave.
fn refine(t: [f64; 3], m: [f64; 3]) -> Peak {
    let s01 = (m[1] - m[0]) / (t[1] - t[0]);
    let s12 = (m[2] - m[1]) / (t[2] - t[1]);
    let curvature = (s12 - s01) / (t[2] - t[0]);
    if !(curvature < 0.0) {
        return Peak {
            time: t[1],
            magnitude: m[1],
        };
    }
    let b = s01 - curvature * (t[0] + t[1]);
    let time = (-b / (2.0 * curvature)).clamp(t[0], t[2]);
    let magnitude = m[0] + (time - t[0]) * s01 + curvature * (time - t[0]) * (time - t[1]);
    Peak {
        time,
        magnitude: magnitude.max(m[1]),
    }
}

/// First local maximum of `|f|` above [`PEAK_FLOOR`], refined quadratically.
pub fn first_peak(series: &TransferSeries) -> Result<Peak> {
    if series.len() < 3 {
        return Err(Error::validation("peak search needs at least three points"));
    }
    let m = series.magnitudes();
    let t = &series.times;
    (1..m.len() - 1)
        .find(|&i| m[i] > PEAK_FLOOR && m[i] >= m[i - 1] && m[i] > m[i + 1])
        .map(|i| refine([t[i - 1], t[i], t[i + 1]], [m[i - 1], m[i], m[i + 1]]))
        .ok_or(Error::PeakNotFound)
}

/// Largest `|f|` on the grid, refined quadratically when it is interior.
pub fn global_peak(series: &TransferSeries) -> Result<Peak> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let m = series.magnitudes();
    let t = &series.times;
    let mut best = 0;
    for (i, &x) in m.iter().enumerate() {
        if x > m[best] {
            best = i;
        }
    }
    if best == 0 || best + 1 == m.len() {
        return Ok(Peak {
            time: t[best],
            magnitude: m[best],
        });
    }
    Ok(refine(
        [t[best - 1], t[best], t[best + 1]],
        [m[best - 1], m[best], m[best + 1]],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChainSpec;
    use crate::spectra::{dress, eigendecompose};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn spectrum(j: &[f64]) -> SpectralData {
        eigendecompose(&ChainSpec::from_couplings(j.to_vec()).unwrap().hopping_matrix()).unwrap()
    }

    fn grid(t_max: f64, dt: f64) -> Vec<f64> {
        TimeGrid::new(t_max, dt).unwrap().times()
    }

    fn synthetic(times: Vec<f64>, mags: impl Fn(f64) -> f64) -> TransferSeries {
        TransferSeries {
            amplitudes: times.iter().map(|&t| C64::new(mags(t), 0.0)).collect(),
            times,
            source: 1,
            target: 1,
            formula: Formula::Bare,
            g_eff: None,
            chain_hash: 0,
        }
    }

    #[test]
    fn grid_endpoints() {
        let t = grid(1.0, 0.25);
        assert_eq!(t, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let t = grid(1.0, 0.3);
        assert_eq!(*t.last().unwrap(), 1.0);
        assert_eq!(t.len(), 5);
        assert!(TimeGrid::new(1.0, 0.0).is_err());
        let auto = TimeGrid::auto(10.0, 4.0, 2.0).unwrap();
        assert_eq!(auto.dt(), 0.0125);
        assert_eq!(TimeGrid::auto(10.0, 0.0, 0.0).unwrap().dt(), 0.05);
    }

    #[test]
    fn bare_at_zero_time_is_identity() {
        let spec = spectrum(&[0.4, 1.0, 1.7, 0.2]);
        for n in 1..=5 {
            for m in 1..=5 {
                let f = bare_transfer(&spec, n, m, &[0.0]).unwrap().amplitudes[0];
                let expect = if n == m { 1.0 } else { 0.0 };
                assert!((f - C64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn two_site_bare_is_sine() {
        // exp(-i t sigma_x) off-diagonal element is -i sin t (hopping -1)
        let spec = spectrum(&[1.0]);
        let times = grid(3.2, 0.01);
        let series = bare_transfer(&spec, 1, 2, &times).unwrap();
        for (t, f) in times.iter().zip(&series.amplitudes) {
            assert_abs_diff_eq!(f.re, 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(f.im, t.sin(), epsilon = 1e-14);
        }
    }

    #[test]
    fn site_indices_are_checked() {
        let spec = spectrum(&[1.0]);
        assert_eq!(
            bare_transfer(&spec, 0, 1, &[0.0]).unwrap_err(),
            Error::SiteIndex { index: 0, n_sites: 2 }
        );
        assert!(bare_transfer(&spec, 1, 3, &[0.0]).is_err());
        let dressed = dress(&spec, 1.0).unwrap();
        assert!(exact_transfer(&dressed, 3, 1, &[0.0]).is_err());
        assert!(weak_correction(&spec, 1, 5, 1.0, 1.0).is_err());
    }

    #[test]
    fn exact_reduces_to_bare_at_zero_coupling() {
        for j in [vec![1.0; 4], vec![1.0; 5], vec![0.3, 1.2, 0.0, 0.8]] {
            let spec = spectrum(&j);
            let times = grid(20.0, 0.05);
            let n = spec.n_sites();
            let bare = bare_transfer(&spec, 1, n, &times).unwrap();
            let exact = exact_transfer(&dress(&spec, 0.0).unwrap(), 1, n, &times).unwrap();
            assert!(exact.sup_distance(&bare) <= 1e-12);
        }
    }

    #[test]
    fn exact_at_zero_time() {
        let spec = spectrum(&[1.0; 6]);
        let dressed = dress(&spec, 1.3).unwrap();
        for n in 1..=7 {
            for m in 1..=7 {
                let f = exact_transfer(&dressed, n, m, &[0.0]).unwrap().amplitudes[0];
                let expect = if n == m { 1.0 } else { 0.0 };
                assert!((f - C64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_state_is_normalized_and_matches_transfer() {
        let spec = spectrum(&[1.0, 0.5, 1.5, 1.0]);
        let dressed = dress(&spec, 0.7).unwrap();
        for t in [0.0, 0.3, 2.0, 17.5] {
            let (chain, bath) = exact_state(&dressed, 2, t).unwrap();
            let total: f64 = chain.iter().chain(&bath).map(|z| z.norm_sqr()).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            let f = exact_transfer(&dressed, 2, 4, &[t]).unwrap().amplitudes[0];
            assert!((f - chain[3]).norm() < 1e-13);
        }
    }

    #[test]
    fn weak_correction_vanishes_at_edges() {
        let spec = spectrum(&[1.0; 5]);
        assert_eq!(weak_correction(&spec, 1, 6, 3.0, 0.0).unwrap(), C64::new(0.0, 0.0));
        assert!(weak_correction(&spec, 1, 6, 0.0, 0.5).unwrap().norm() < 1e-15);
    }

    #[test]
    fn weak_bracket_zero_mode_limit() {
        // independent evaluation straight from the defining expression
        let direct = |eps: f64, t: f64| {
            let e = C64::new(0.0, -t * eps).exp();
            e * C64::new(-1.0 / (eps * eps), -t / eps) + 1.0 / (eps * eps)
        };
        for t in [0.5, 1.0, 3.0] {
            assert_eq!(weak_bracket(0.0, t), C64::new(-0.5 * t * t, 0.0));
            let finite = direct(1e-4, t);
            assert!((finite - C64::new(-0.5 * t * t, 0.0)).norm() < 1e-3 * t.powi(3));
            // the series branch agrees with the direct form where the latter is accurate
            for eps in [0.05, 0.2, 1.0, -0.7, 3.0] {
                assert!((weak_bracket(eps, t) - direct(eps, t)).norm() < 1e-11, "eps {eps} t {t}");
            }
        }
    }

    #[test]
    fn strong_law_zero_at_quarter_period() {
        let spec = spectrum(&[1.0, 2.0, 0.5]);
        let g = 3.0;
        let t = PI / (2.0 * g);
        let f = strong_coupling_transfer(&spec, 1, 4, &[0.0, t], g).unwrap();
        assert_eq!(f.formula, Formula::StrongApprox);
        assert_eq!(f.times[1], t);
        assert!(f.amplitudes[1].norm() < 1e-15);
        assert!(strong_coupling_approx(&f, g).is_err());
        assert!(strong_coupling_transfer(&spec, 1, 4, &[0.0], 0.0).is_err());
    }

    #[test]
    fn strong_law_full_modulation_at_multiples() {
        let spec = spectrum(&[1.0; 9]);
        let times = grid(20.0, 1e-3);
        let bare = bare_transfer(&spec, 1, 10, &times).unwrap();
        let t0 = global_peak(&bare).unwrap().time;
        let f0 = bare_transfer(&spec, 1, 10, &[t0]).unwrap().amplitudes[0].norm();
        for j in 1..4 {
            let g = j as f64 * PI / (2.0 * t0);
            let f = strong_coupling_transfer(&spec, 1, 10, &[2.0 * t0], g).unwrap();
            assert_abs_diff_eq!(f.amplitudes[0].norm(), f0, epsilon = 1e-12);
        }
    }

    #[test]
    fn peaks_of_sine() {
        let s = synthetic(grid(2.0 * PI, 0.01), |t| t.sin().abs());
        let p = first_peak(&s).unwrap();
        assert_abs_diff_eq!(p.time, FRAC_PI_2, epsilon = 1e-4);
        assert_abs_diff_eq!(p.magnitude, 1.0, epsilon = 1e-6);
        let g = global_peak(&s).unwrap();
        assert!((g.time - FRAC_PI_2).abs() < 1e-4 || (g.time - 3.0 * FRAC_PI_2).abs() < 1e-4);
        assert_abs_diff_eq!(g.magnitude, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn monotone_and_flat_series() {
        let s = synthetic(grid(1.0, 0.1), |t| t);
        assert_eq!(first_peak(&s), Err(Error::PeakNotFound));
        assert_eq!(global_peak(&s).unwrap().magnitude, 1.0);
        let zero = synthetic(grid(1.0, 0.1), |_| 0.0);
        assert_eq!(global_peak(&zero).unwrap().magnitude, 0.0);
        assert_eq!(first_peak(&zero), Err(Error::PeakNotFound));
        let tiny = synthetic(grid(PI, 0.01), |t| 0.01 * t.sin());
        assert_eq!(first_peak(&tiny), Err(Error::PeakNotFound));
        let empty = synthetic(Vec::new(), |t| t);
        assert_eq!(global_peak(&empty), Err(Error::EmptySeries));
        assert!(first_peak(&synthetic(vec![0.0, 1.0], |t| t)).is_err());
    }

    #[test]
    fn engineered_five_site_first_peak_is_perfect() {
        let spec = spectrum(&crate::spectra::engineered_couplings(5, None).unwrap());
        let series = bare_transfer(&spec, 1, 5, &grid(3.0, 1e-3)).unwrap();
        let p = first_peak(&series).unwrap();
        assert!(1.0 - p.magnitude <= 1e-6, "{p:?}");
        // spectrum 2m for m = -2..2 gives perfect transfer at pi/2
        assert_abs_diff_eq!(p.time, FRAC_PI_2, epsilon = 1e-4);
    }

    #[test]
    fn uniform_ten_global_peak_is_first_peak() {
        let spec = spectrum(&[1.0; 9]);
        let series = bare_transfer(&spec, 1, 10, &grid(20.0, 0.01)).unwrap();
        assert_eq!(first_peak(&series).unwrap(), global_peak(&series).unwrap());
    }

    #[test]
    fn transpose_symmetry_for_real_chains() {
        let spec = spectrum(&[0.9, 1.4, 0.2, 1.1]);
        let dressed = dress(&spec, 0.6).unwrap();
        let times = grid(10.0, 0.1);
        for (n, m) in [(1, 5), (2, 4), (1, 3)] {
            let a = exact_transfer(&dressed, n, m, &times).unwrap();
            let b = exact_transfer(&dressed, m, n, &times).unwrap();
            assert!(a.sup_distance(&b) < 1e-12);
        }
    }

    #[test]
    fn complex_hopping_matches_direct_exponential() {
        // 3-site ring with a flux: compare against a truncated Taylor propagator
        let phase = C64::from_polar(1.0, 0.7);
        let mut h = DMatrix::<C64>::zeros(3, 3);
        for (r, c) in [(0, 1), (1, 2), (2, 0)] {
            h[(r, c)] = -phase;
            h[(c, r)] = -phase.conj();
        }
        let spec = eigendecompose(&h).unwrap();
        let t = 0.8;
        let mut u = DMatrix::<C64>::identity(3, 3);
        let mut term = DMatrix::<C64>::identity(3, 3);
        for k in 1..60 {
            term = &term * &h * C64::new(0.0, -t / k as f64);
            u += &term;
        }
        for n in 1..=3 {
            for m in 1..=3 {
                let f = bare_transfer(&spec, n, m, &[t]).unwrap().amplitudes[0];
                assert!((f - u[(m - 1, n - 1)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_subspace_rotation_leaves_transfer_unchanged() {
        // two disconnected dimers: eigenvalues -1, -1, 1, 1
        let spec = spectrum(&[1.0, 0.0, 1.0]);
        let mut vectors = spec.eigenvectors().clone();
        for (pair, angle, phase) in [((0, 1), 0.4f64, 1.3), ((2, 3), 1.1, -0.5)] {
            let (c, s) = (angle.cos(), angle.sin());
            let w = C64::from_polar(1.0, phase);
            let (a, b) = (vectors.row(pair.0).into_owned(), vectors.row(pair.1).into_owned());
            vectors.set_row(pair.0, &(&a * C64::from(c) + &b * (w * s)));
            vectors.set_row(pair.1, &(&b * C64::from(c) - &a * (w.conj() * s)));
        }
        let rotated = SpectralData::from_parts(spec.eigenvalues().to_vec(), vectors).unwrap();
        let times = grid(8.0, 0.1);
        let (plain, turned) = (dress(&spec, 0.7).unwrap(), dress(&rotated, 0.7).unwrap());
        for n in 1..=4 {
            for m in 1..=4 {
                let bare = bare_transfer(&spec, n, m, &times).unwrap();
                assert!(bare.sup_distance(&bare_transfer(&rotated, n, m, &times).unwrap()) < 1e-12);
                let a = exact_transfer(&plain, n, m, &times).unwrap();
                assert!(a.sup_distance(&exact_transfer(&turned, n, m, &times).unwrap()) < 1e-12);
            }
        }
    }

    #[test]
    fn formula_tags_round_trip() {
        for f in [
            Formula::Bare,
            Formula::Exact,
            Formula::StrongApprox,
            Formula::WeakCorrected,
            Formula::Oracle,
        ] {
            assert_eq!(f.tag().parse::<Formula>().unwrap(), f);
        }
        assert!("nope".parse::<Formula>().is_err());
    }
}

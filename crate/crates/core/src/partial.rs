//! Per-frequency inversion of the smoothed spectral matrix, partial coherence,
//! the absolute rescaled inverse spectral density `|d_ij|`, and the direct and
//! three-component formulas that cross-check the inversion route.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number_1, hermitian_inverse, CMatrix};
use crate::spectra::{neighbourhood_size, FieldKind, FrequencyGrid, SpectralField};

/// Ridge escalation used when a matrix is ill-conditioned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgePolicy {
    pub max_condition: f64,
    /// Successive `ε`; the ridge added is `ε·trace/d·I`.
    pub steps: Vec<f64>,
}

impl Default for RidgePolicy {
    fn default() -> Self {
        RidgePolicy {
            max_condition: 1e10,
            steps: vec![1e-8, 1e-6, 1e-4],
        }
    }
}

/// Tolerance for the Hermitian check on inputs, relative to the largest entry.
const HERMITIAN_TOL: f64 = 1e-12;

/// Inverts a Hermitian matrix under `policy`. Returns the inverse and the `ε`
/// applied (0 when none was needed), or `None` once all ridges are exhausted.
pub fn regularised_inverse(m: &CMatrix, policy: &RidgePolicy) -> Option<(CMatrix, f64)> {
    let try_inv = |a: &CMatrix| {
        hermitian_inverse(a).filter(|inv| condition_number_1(a, inv) <= policy.max_condition)
    };
    if let Some(inv) = try_inv(m) {
        return Some((inv, 0.0));
    }
    let d = m.rows() as f64;
    let level = m.trace_re() / d;
    if !(level > 0.0) {
        return None;
    }
    for &eps in &policy.steps {
        let mut a = m.clone();
        a.add_to_diagonal(eps * level);
        if let Some(inv) = try_inv(&a) {
            return Some((inv, eps));
        }
    }
    None
}

fn check_hermitian(m: &CMatrix) -> Result<()> {
    let defect = m.hermitian_defect();
    if defect > HERMITIAN_TOL * m.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Contract(format!("spectral matrix not Hermitian (defect {defect:e})")));
    }
    Ok(())
}

fn check_smoothed(field: &SpectralField) -> Result<()> {
    if field.d < 2 {
        return Err(Error::Contract("at least 2 components are required".into()));
    }
    match (field.kind, field.half_widths) {
        (FieldKind::Smoothed, Some(h)) if neighbourhood_size(h) >= field.d => Ok(()),
        (FieldKind::Smoothed, Some(h)) => Err(Error::Contract(format!(
            "smoothing neighbourhood of {} points is smaller than d = {}; the spectral matrix is rank deficient",
            neighbourhood_size(h),
            field.d
        ))),
        _ => Err(Error::Contract(
            "partial statistics need a smoothed spectral field; the raw periodogram is rank one".into(),
        )),
    }
}

/// Components whose auto-spectrum vanishes at every grid point (empty
/// components, constant marks).
pub fn degenerate_components(field: &SpectralField) -> Vec<usize> {
    (0..field.d)
        .filter(|&i| (0..field.grid.len()).all(|k| !(field.entry(k, i, i).re > 0.0)))
        .collect()
}

/// `♭(w) = f(w)⁻¹` per grid point with the applied ridge recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseField {
    pub grid: FrequencyGrid,
    pub d: usize,
    /// `values[idx * d * d + i * d + j]`; zero where `singular[idx]`.
    pub values: Vec<Complex64>,
    pub ridge: Vec<f64>,
    pub singular: Vec<bool>,
}

impl InverseField {
    pub fn entry(&self, idx: usize, i: usize, j: usize) -> Complex64 {
        self.values[idx * self.d * self.d + i * self.d + j]
    }

    pub fn matrix(&self, idx: usize) -> CMatrix {
        let dd = self.d * self.d;
        CMatrix::from_row_major(self.d, self.d, self.values[idx * dd..(idx + 1) * dd].to_vec())
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        if i == j || i >= self.d || j >= self.d {
            return Err(Error::Parameter(format!(
                "pair ({}, {}) must be two distinct components",
                i + 1,
                j + 1
            )));
        }
        Ok(())
    }

    /// Maps each grid point to `f(b_ii, b_jj, b_ij)`; NaN at singular points.
    fn pair_map<T>(&self, i: usize, j: usize, nan: T, f: impl Fn(f64, f64, Complex64) -> T + Sync) -> Vec<T>
    where
        T: Copy + Send + Sync,
    {
        (0..self.grid.len())
            .map(|k| {
                if self.singular[k] {
                    nan
                } else {
                    f(self.entry(k, i, i).re, self.entry(k, j, j).re, self.entry(k, i, j))
                }
            })
            .collect()
    }
}

/// Inverts the smoothed spectral matrix at every grid point.
pub fn invert_spectral_matrix(field: &SpectralField, policy: &RidgePolicy) -> Result<InverseField> {
    check_smoothed(field)?;
    let d = field.d;
    let n = field.grid.len();
    let per_point: Vec<Result<Option<(CMatrix, f64)>>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let m = field.matrix(k);
            check_hermitian(&m)?;
            Ok(regularised_inverse(&m, policy))
        })
        .collect();
    let mut values = Vec::with_capacity(n * d * d);
    let mut ridge = Vec::with_capacity(n);
    let mut singular = Vec::with_capacity(n);
    for r in per_point {
        match r? {
            Some((inv, eps)) => {
                values.extend_from_slice(inv.as_slice());
                ridge.push(eps);
                singular.push(false);
            }
            None => {
                values.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), d * d));
                ridge.push(f64::NAN);
                singular.push(true);
            }
        }
    }
    Ok(InverseField {
        grid: field.grid.clone(),
        d,
        values,
        ridge,
        singular,
    })
}

/// `|d_ij(w)| = |♭_ij| / √(♭_ii ♭_jj)`.
pub fn rescaled_inverse_density(inv: &InverseField, i: usize, j: usize) -> Result<Vec<f64>> {
    inv.check_pair(i, j)?;
    Ok(inv.pair_map(i, j, f64::NAN, |bii, bjj, bij| bij.norm() / (bii * bjj).sqrt()))
}

/// Complex partial coherency `R_ij|rest = -♭_ij / √(♭_ii ♭_jj)`.
pub fn partial_coherence_via_inverse(inv: &InverseField, i: usize, j: usize) -> Result<Vec<Complex64>> {
    inv.check_pair(i, j)?;
    let nan = Complex64::new(f64::NAN, f64::NAN);
    Ok(inv.pair_map(i, j, nan, |bii, bjj, bij| -bij / (bii * bjj).sqrt()))
}

/// Partial spectra of the pair from the inverse: the 2×2 block of `♭` is the
/// inverse of the pair's partial spectral matrix. Returns
/// `(f_ii|rest, f_jj|rest, f_ij|rest)`.
pub fn partial_spectra_via_inverse(
    inv: &InverseField,
    i: usize,
    j: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<Complex64>)> {
    inv.check_pair(i, j)?;
    let nan = Complex64::new(f64::NAN, f64::NAN);
    let triples = inv.pair_map(i, j, (f64::NAN, f64::NAN, nan), |bii, bjj, bij| {
        let det = bii * bjj - bij.norm_sqr();
        (bjj / det, bii / det, -bij / det)
    });
    Ok((
        triples.iter().map(|t| t.0).collect(),
        triples.iter().map(|t| t.1).collect(),
        triples.iter().map(|t| t.2).collect(),
    ))
}

/// Spectral matrix of the components `targets` after removing the linear
/// effect of `cond`: `f_AA - f_AR f_RR⁻¹ f_RA` at every grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalField {
    pub grid: FrequencyGrid,
    pub targets: Vec<usize>,
    pub cond: Vec<usize>,
    /// `values[idx * a * a + r * a + c]` with `a = targets.len()`.
    pub values: Vec<Complex64>,
    pub ridge: Vec<f64>,
}

impl ConditionalField {
    /// Entry for positions `(a, b)` within `targets`.
    pub fn entry(&self, idx: usize, a: usize, b: usize) -> Complex64 {
        let n = self.targets.len();
        self.values[idx * n * n + a * n + b]
    }

    pub fn entry_field(&self, a: usize, b: usize) -> Vec<Complex64> {
        (0..self.grid.len()).map(|k| self.entry(k, a, b)).collect()
    }
}

fn conditional_matrix(m: &CMatrix, targets: &[usize], cond: &[usize], policy: &RidgePolicy) -> Option<(CMatrix, f64)> {
    let f_aa = m.select(targets, targets);
    if cond.is_empty() {
        return Some((f_aa, 0.0));
    }
    let (inv_rr, eps) = regularised_inverse(&m.select(cond, cond), policy)?;
    let f_ar = m.select(targets, cond);
    let f_ra = m.select(cond, targets);
    let mut out = f_aa.sub(&f_ar.matmul(&inv_rr).matmul(&f_ra));
    out.make_hermitian();
    Some((out, eps))
}

fn check_sets(d: usize, targets: &[usize], cond: &[usize]) -> Result<()> {
    let mut seen = vec![false; d];
    for &c in targets.iter().chain(cond) {
        if c >= d {
            return Err(Error::Parameter(format!("component {} out of range 1..={d}", c + 1)));
        }
        if seen[c] {
            return Err(Error::Parameter(format!("component {} listed twice", c + 1)));
        }
        seen[c] = true;
    }
    if targets.is_empty() {
        return Err(Error::Parameter("no target components".into()));
    }
    Ok(())
}

/// Direct conditioning formula with an explicit conditioning set.
pub fn conditional_spectra(
    field: &SpectralField,
    targets: &[usize],
    cond: &[usize],
    policy: &RidgePolicy,
) -> Result<ConditionalField> {
    check_sets(field.d, targets, cond)?;
    let n = field.grid.len();
    let per_point: Vec<Result<(CMatrix, f64)>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let m = field.matrix(k);
            check_hermitian(&m)?;
            conditional_matrix(&m, targets, cond, policy).ok_or(Error::Singular { freq: field.grid.freq(k) })
        })
        .collect();
    let mut values = Vec::with_capacity(n * targets.len() * targets.len());
    let mut ridge = Vec::with_capacity(n);
    for r in per_point {
        let (m, eps) = r?;
        values.extend_from_slice(m.as_slice());
        ridge.push(eps);
    }
    Ok(ConditionalField {
        grid: field.grid.clone(),
        targets: targets.to_vec(),
        cond: cond.to_vec(),
        values,
        ridge,
    })
}

/// `f_ij|rest = f_ij - f_i,rest f_rest,rest⁻¹ f_rest,j` with rest = all other
/// components (needs `d ≥ 3`). Returns the 2×2 conditional field for `(i, j)`.
pub fn partial_cross_spectrum_direct(
    field: &SpectralField,
    i: usize,
    j: usize,
    policy: &RidgePolicy,
) -> Result<ConditionalField> {
    if field.d < 3 {
        return Err(Error::Contract(format!(
            "conditioning needs d >= 3 components, got d = {}",
            field.d
        )));
    }
    if i == j {
        return Err(Error::Parameter("pair must be two distinct components".into()));
    }
    let rest: Vec<usize> = (0..field.d).filter(|&k| k != i && k != j).collect();
    conditional_spectra(field, &[i, j], &rest, policy)
}

/// Partial coherency from a 2×2 conditional field.
pub fn coherency_from_conditional(c: &ConditionalField) -> Vec<Complex64> {
    (0..c.grid.len())
        .map(|k| c.entry(k, 0, 1) / (c.entry(k, 0, 0).re * c.entry(k, 1, 1).re).sqrt())
        .collect()
}

/// Threshold below which `1 - |R|²` counts as a degenerate denominator.
const THREE_TOL: f64 = 1e-12;

/// `R_ij|k = (R_ij - R_ik·conj(R_jk)) / (√(1 - |R_ik|²)·√(1 - |R_jk|²))` with
/// complex coherencies `R_ab = f_ab / √(f_aa f_bb)`.
pub fn partial_coherence_three(field: &SpectralField, i: usize, j: usize, k: usize) -> Result<Vec<Complex64>> {
    if i == j || i == k || j == k || i.max(j).max(k) >= field.d {
        return Err(Error::Parameter("need three distinct valid components".into()));
    }
    (0..field.grid.len())
        .map(|idx| {
            let r = |a: usize, b: usize| {
                field.entry(idx, a, b) / (field.entry(idx, a, a).re * field.entry(idx, b, b).re).sqrt()
            };
            let (rij, rik, rjk) = (r(i, j), r(i, k), r(j, k));
            let (di, dj) = (1.0 - rik.norm_sqr(), 1.0 - rjk.norm_sqr());
            if !(di > THREE_TOL) || !(dj > THREE_TOL) {
                return Err(Error::Singular { freq: field.grid.freq(idx) });
            }
            Ok((rij - rik * rjk.conj()) / (di.sqrt() * dj.sqrt()))
        })
        .collect()
}

/// `f_iK|J`: cross-spectrum of `i` with the superposition of `K`, conditioned
/// on `J`. With `J = ∅` and `K = V∖{i}` this is the dot-type cross-spectrum.
pub fn partial_dot_spectrum(
    field: &SpectralField,
    i: usize,
    k_set: &[usize],
    j_set: &[usize],
    policy: &RidgePolicy,
) -> Result<Vec<Complex64>> {
    if k_set.is_empty() {
        return Err(Error::Parameter("K must be non-empty".into()));
    }
    let targets: Vec<usize> = std::iter::once(i).chain(k_set.iter().copied()).collect();
    let c = conditional_spectra(field, &targets, j_set, policy)?;
    Ok((0..field.grid.len())
        .map(|idx| (1..targets.len()).map(|a| c.entry(idx, 0, a)).sum())
        .collect())
}

/// Partial statistics for every unordered pair `i < j`, conditioning on all
/// remaining components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialField {
    pub grid: FrequencyGrid,
    pub d: usize,
    pub marked: bool,
    pub pairs: Vec<(usize, usize)>,
    /// `[pair][idx]` partial cross-spectrum `f_ij|rest`.
    pub cross: Vec<Vec<Complex64>>,
    /// `[pair][idx]` partial coherency `R_ij|rest`.
    pub coherency: Vec<Vec<Complex64>>,
    /// `[pair][idx]` `|d_ij|`.
    pub abs_d: Vec<Vec<f64>>,
    /// `[pair][idx]` partial auto-spectra `f_ii|rest`, `f_jj|rest`.
    pub auto_i: Vec<Vec<f64>>,
    pub auto_j: Vec<Vec<f64>>,
    /// Per grid point: `ε` applied (NaN when singular).
    pub ridge: Vec<f64>,
    pub singular: Vec<bool>,
    /// Components with identically vanishing auto-spectrum; when non-empty the
    /// per-pair fields are NaN.
    pub degenerate: Vec<usize>,
}

impl PartialField {
    pub fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (i.min(j), i.max(j));
        self.pairs.iter().position(|&p| p == (a, b))
    }

    /// `|d_ij|` at one grid point; symmetric in `i`, `j`.
    pub fn abs_d_at(&self, i: usize, j: usize, idx: usize) -> f64 {
        self.pair_index(i, j).map_or(f64::NAN, |p| self.abs_d[p][idx])
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degenerate.is_empty()
    }

    /// Fraction of grid points needing no ridge.
    pub fn unregularised_fraction(&self) -> f64 {
        self.ridge.iter().filter(|&&r| r == 0.0).count() as f64 / self.ridge.len().max(1) as f64
    }
}

/// Inverts once and derives every pair's partial statistics.
pub fn partial_field(field: &SpectralField, policy: &RidgePolicy) -> Result<PartialField> {
    check_smoothed(field)?;
    let d = field.d;
    let n = field.grid.len();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let degenerate = degenerate_components(field);
    let nan_c = Complex64::new(f64::NAN, f64::NAN);
    if !degenerate.is_empty() {
        let np = pairs.len();
        return Ok(PartialField {
            grid: field.grid.clone(),
            d,
            marked: field.marked,
            pairs,
            cross: vec![vec![nan_c; n]; np],
            coherency: vec![vec![nan_c; n]; np],
            abs_d: vec![vec![f64::NAN; n]; np],
            auto_i: vec![vec![f64::NAN; n]; np],
            auto_j: vec![vec![f64::NAN; n]; np],
            ridge: vec![f64::NAN; n],
            singular: vec![true; n],
            degenerate,
        });
    }
    let inv = invert_spectral_matrix(field, policy)?;
    let mut out = PartialField {
        grid: field.grid.clone(),
        d,
        marked: field.marked,
        pairs: pairs.clone(),
        cross: Vec::new(),
        coherency: Vec::new(),
        abs_d: Vec::new(),
        auto_i: Vec::new(),
        auto_j: Vec::new(),
        ridge: inv.ridge.clone(),
        singular: inv.singular.clone(),
        degenerate,
    };
    for &(i, j) in &pairs {
        let (ai, aj, cross) = partial_spectra_via_inverse(&inv, i, j)?;
        out.coherency.push(partial_coherence_via_inverse(&inv, i, j)?);
        out.abs_d.push(rescaled_inverse_density(&inv, i, j)?);
        out.cross.push(cross);
        out.auto_i.push(ai);
        out.auto_j.push(aj);
    }
    Ok(out)
}

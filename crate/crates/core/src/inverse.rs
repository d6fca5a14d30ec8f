//! Back-transforms of spectral and partial-spectral fields to lag-domain
//! covariance characteristics on the conjugate lag grid.
//!
//! The half grid `p ≥ 0` is mirrored through `f(-w) = conj f(w)` onto the
//! symmetric lattice `p ∈ -P..=P`, `q ∈ -Q..=Q`, `u` over all residues mod `T`,
//! where the discrete pair
//!
//! `κ(c, h) = |G|⁻¹ Σ_w f(w) exp(+2πi(p c_x + q c_y + u h/T))`,
//! `f(w) = Σ_{c,h} κ(c, h) exp(-2πi(p c_x + q c_y + u h/T))`
//!
//! is exact for `c_x = k/(2P+1)`, `c_y = l/(2Q+1)` and integer `h`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::MultiPattern;
use crate::partial::{conditional_spectra, RidgePolicy};
use crate::spectra::{cis_neg, FrequencyGrid, Normalisation, SpectralField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest imaginary residue accepted, relative to the field's largest modulus.
pub const RESIDUE_TOL: f64 = 1e-9;

/// Symmetric frequency lattice and its conjugate lag lattice, which share the
/// same integer index ranges: `a ∈ -P..=P`, `b ∈ -Q..=Q`, `c ∈ u_min..=u_max`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagGrid {
    pub p_max: i32,
    pub q_max: i32,
    pub u_min: i32,
    pub u_max: i32,
    pub t_steps: u32,
}

impl LagGrid {
    /// Conjugate grid of `grid`; needs `q_min = -q_max` and the full `u` range.
    pub fn conjugate(grid: &FrequencyGrid) -> Result<LagGrid> {
        grid.validate()?;
        if grid.q_min != -grid.q_max {
            return Err(Error::Parameter(format!(
                "inversion needs a symmetric q range, got {}..={}",
                grid.q_min, grid.q_max
            )));
        }
        let (lo, hi) = FrequencyGrid::u_bounds(grid.t_steps);
        if (grid.u_min, grid.u_max) != (lo, hi) {
            return Err(Error::Parameter(format!(
                "inversion needs every temporal frequency {lo}..={hi}, got {}..={}",
                grid.u_min, grid.u_max
            )));
        }
        Ok(LagGrid {
            p_max: grid.p_max,
            q_max: grid.q_max,
            u_min: lo,
            u_max: hi,
            t_steps: grid.t_steps,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        [
            (2 * self.p_max + 1) as usize,
            (2 * self.q_max + 1) as usize,
            self.t_steps as usize,
        ]
    }

    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `|G|⁻¹`, the factor applied by the inverse transform.
    pub fn normalisation(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn index(&self, a: i32, b: i32, c: i32) -> Option<usize> {
        if a.abs() > self.p_max || b.abs() > self.q_max || c < self.u_min || c > self.u_max {
            return None;
        }
        let [_, nb, nc] = self.dims();
        Some((((a + self.p_max) as usize) * nb + (b + self.q_max) as usize) * nc + (c - self.u_min) as usize)
    }

    /// Integer coordinates `(a, b, c)` of a linear index.
    pub fn coords(&self, idx: usize) -> (i32, i32, i32) {
        let [_, nb, nc] = self.dims();
        let c = (idx % nc) as i32 + self.u_min;
        let b = ((idx / nc) % nb) as i32 - self.q_max;
        let a = (idx / (nb * nc)) as i32 - self.p_max;
        (a, b, c)
    }

    /// Lag `(c_x, c_y, h)` of a linear index.
    pub fn lag(&self, idx: usize) -> (f64, f64, i32) {
        let (a, b, c) = self.coords(idx);
        let [na, nb, _] = self.dims();
        (a as f64 / na as f64, b as f64 / nb as f64, c)
    }

    /// Index of `(-a, -b, -c mod T)`.
    pub fn negated(&self, idx: usize) -> usize {
        let (a, b, c) = self.coords(idx);
        self.index(-a, -b, self.wrap_u(-c)).expect("negation stays on the grid")
    }

    fn wrap_u(&self, c: i32) -> i32 {
        (c - self.u_min).rem_euclid(self.t_steps as i32) + self.u_min
    }
}

/// Mirrors one entry of a half-grid field onto the symmetric lattice. On the
/// `p = 0` plane both `w` and `-w` are present and are averaged as
/// `(f(w) + conj f(-w)) / 2`.
///
/// Unless the grid includes DC, the DC ordinate (the squared-mean term) is
/// replaced by the real mean of its spatial axis neighbours `(±1, 0, 0)`,
/// `(0, ±1, 0)`, so the back-transform is a centred covariance.
pub fn symmetrise(grid: &FrequencyGrid, half: &[Complex64]) -> Result<(LagGrid, Vec<Complex64>)> {
    let lg = LagGrid::conjugate(grid)?;
    if half.len() != grid.len() {
        return Err(Error::Parameter(format!("{} values for a grid of {}", half.len(), grid.len())));
    }
    let at = |p: i32, q: i32, u: i32| half[grid.index(p, q, u).expect("on grid")];
    let full = (0..lg.len())
        .map(|idx| {
            let (p, q, u) = lg.coords(idx);
            let nu = lg.wrap_u(-u);
            match p {
                p if p > 0 => at(p, q, u),
                p if p < 0 => at(-p, -q, nu).conj(),
                _ => 0.5 * (at(0, q, u) + at(0, -q, nu).conj()),
            }
        })
        .collect::<Vec<Complex64>>();
    let mut full = full;
    if !grid.include_dc {
        let nb: Vec<Complex64> = [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .filter_map(|&(a, b)| lg.index(a, b, 0).map(|k| full[k]))
            .collect();
        let dc = lg.index(0, 0, 0).expect("DC on grid");
        full[dc] = if nb.is_empty() {
            ZERO
        } else {
            Complex64::new(nb.iter().map(|z| z.re).sum::<f64>() / nb.len() as f64, 0.0)
        };
    }
    Ok((lg, full))
}

/// Twiddle matrix `exp(sign·2πi·(f·c mod n)/n)` for `f, c ∈ lo..lo+n`.
fn twiddles(n: usize, lo: i32, sign: f64) -> Vec<Complex64> {
    let mut w = Vec::with_capacity(n * n);
    for f in 0..n as i64 {
        for c in 0..n as i64 {
            let r = ((f + lo as i64) * (c + lo as i64)).rem_euclid(n as i64);
            let z = cis_neg(r as f64 / n as f64);
            w.push(if sign > 0.0 { z.conj() } else { z });
        }
    }
    w
}

/// One separable 3-D transform, axis by axis.
fn transform(lg: &LagGrid, data: &[Complex64], sign: f64) -> Vec<Complex64> {
    let dims = lg.dims();
    let lows = [-lg.p_max, -lg.q_max, lg.u_min];
    let mut cur = data.to_vec();
    for axis in 0..3 {
        let n = dims[axis];
        let tw = twiddles(n, lows[axis], sign);
        let stride: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let mut next = vec![ZERO; cur.len()];
        next.par_chunks_mut(n * stride).enumerate().for_each(|(o, block)| {
            debug_assert!(o < outer);
            let src = &cur[o * n * stride..(o + 1) * n * stride];
            for out in 0..n {
                let row = &tw[out * n..(out + 1) * n];
                for s in 0..stride {
                    let mut acc = ZERO;
                    for (inp, &z) in row.iter().enumerate() {
                        acc += z * src[inp * stride + s];
                    }
                    block[out * stride + s] = acc;
                }
            }
        });
        cur = next;
    }
    cur
}

/// Inverse transform of a field already on the symmetric lattice. Returns the
/// real part and the largest imaginary residue; fails when the residue exceeds
/// [`RESIDUE_TOL`] times the field's largest modulus.
pub fn inverse_symmetric(lg: &LagGrid, full: &[Complex64]) -> Result<(Vec<f64>, f64)> {
    if full.len() != lg.len() {
        return Err(Error::Parameter(format!("{} values for a lag grid of {}", full.len(), lg.len())));
    }
    let norm = lg.normalisation();
    let z = transform(lg, full, 1.0);
    let scale = full.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let residue = z.iter().map(|v| (v.im * norm).abs()).fold(0.0, f64::max);
    if residue > RESIDUE_TOL * scale {
        return Err(Error::Symmetry {
            residue,
            tolerance: RESIDUE_TOL * scale,
        });
    }
    Ok((z.iter().map(|v| v.re * norm).collect(), residue))
}

/// `f(w) = Σ κ(c, h) exp(-2πi(p c_x + q c_y + u h/T))` on the symmetric lattice.
pub fn forward_transform(lg: &LagGrid, values: &[f64]) -> Vec<Complex64> {
    let data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(lg, &data, -1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagKind {
    CompleteAuto,
    CompleteCross,
    PartialAuto,
    PartialCross,
    Scaled,
}

impl LagKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LagKind::CompleteAuto => "complete_auto",
            LagKind::CompleteCross => "complete_cross",
            LagKind::PartialAuto => "partial_auto",
            LagKind::PartialCross => "partial_cross",
            LagKind::Scaled => "scaled",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagSeries {
    pub i: usize,
    pub j: usize,
    pub kind: LagKind,
    /// `κ_ij(c, h)` in [`LagGrid`] order.
    pub values: Vec<f64>,
    /// Largest imaginary part discarded.
    pub residue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagField {
    pub lags: LagGrid,
    pub normalisation: f64,
    /// Conditioning set for partial kinds, empty otherwise.
    pub cond: Vec<usize>,
    pub series: Vec<LagSeries>,
}

impl LagField {
    pub fn get(&self, i: usize, j: usize) -> Option<&LagSeries> {
        self.series.iter().find(|s| s.i == i && s.j == j)
    }
}

fn invert_entry(grid: &FrequencyGrid, half: &[Complex64]) -> Result<(LagGrid, Vec<f64>, f64)> {
    let (lg, full) = symmetrise(grid, half)?;
    let (values, residue) = inverse_symmetric(&lg, &full)?;
    Ok((lg, values, residue))
}

/// Inverse transform of every ordered entry `(i, j)` of a spectral field:
/// Bartlett's complete covariance `κ_ij(c, h)` under the field's normalisation.
pub fn inverse_transform(field: &SpectralField) -> Result<LagField> {
    let lags = LagGrid::conjugate(&field.grid)?;
    let mut series = Vec::with_capacity(field.d * field.d);
    for i in 0..field.d {
        for j in 0..field.d {
            let (_, values, residue) = invert_entry(&field.grid, &field.entry_field(i, j))?;
            series.push(LagSeries {
                i,
                j,
                kind: if i == j { LagKind::CompleteAuto } else { LagKind::CompleteCross },
                values,
                residue,
            });
        }
    }
    Ok(LagField {
        normalisation: lags.normalisation(),
        lags,
        cond: Vec::new(),
        series,
    })
}

/// Lag characteristics of `targets` conditioned on `cond`: every ordered
/// target pair, `partial_auto` on the diagonal and `partial_cross` off it.
/// `κ_ii|V∖{i}` is `targets = [i]`; `κ_ii|V∖{i,j}` is `targets = [i, j]` with
/// `cond = V∖{i,j}`.
pub fn conditional_lag_characteristics(
    field: &SpectralField,
    targets: &[usize],
    cond: &[usize],
    policy: &RidgePolicy,
) -> Result<LagField> {
    let lags = LagGrid::conjugate(&field.grid)?;
    let c = conditional_spectra(field, targets, cond, policy)?;
    let mut series = Vec::new();
    for (a, &i) in targets.iter().enumerate() {
        for (b, &j) in targets.iter().enumerate() {
            let (_, values, residue) = invert_entry(&field.grid, &c.entry_field(a, b))?;
            series.push(LagSeries {
                i,
                j,
                kind: if a == b { LagKind::PartialAuto } else { LagKind::PartialCross },
                values,
                residue,
            });
        }
    }
    Ok(LagField {
        normalisation: lags.normalisation(),
        lags,
        cond: cond.to_vec(),
        series,
    })
}

/// Partial auto- and cross-covariance of `(i, j)` given all other components.
/// For `d = 2` the conditioning set is empty and this is the ordinary inverse.
pub fn partial_lag_characteristics(field: &SpectralField, i: usize, j: usize, policy: &RidgePolicy) -> Result<LagField> {
    if i == j || i >= field.d || j >= field.d {
        return Err(Error::Parameter("need two distinct valid components".into()));
    }
    let rest: Vec<usize> = (0..field.d).filter(|&k| k != i && k != j).collect();
    conditional_lag_characteristics(field, &[i, j], &rest, policy)
}

/// Homogeneous plug-in intensities `n_i / (|W| T)` in unit-square units.
pub fn homogeneous_intensities(pattern: &MultiPattern) -> Vec<f64> {
    let vol = pattern.t_steps() as f64;
    pattern.counts().iter().map(|&n| n as f64 / vol).collect()
}

/// `τ_ij = κ_ij / √(λ_i λ_j)` with constant intensities.
pub fn scaled_covariance(field: &LagField, intensities: &[f64]) -> Result<LagField> {
    if intensities.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Parameter("plug-in intensities must be positive".into()));
    }
    let mut out = field.clone();
    for s in &mut out.series {
        let (li, lj) = (
            *intensities.get(s.i).ok_or_else(|| Error::Parameter("missing intensity".into()))?,
            *intensities.get(s.j).ok_or_else(|| Error::Parameter("missing intensity".into()))?,
        );
        let den = (li * lj).sqrt();
        for v in &mut s.values {
            *v /= den;
        }
        s.residue /= den;
        s.kind = LagKind::Scaled;
    }
    Ok(out)
}

/// Mass of the zero-lag atom per component under `norm`: `Σ_k w_k² / s_i²`
/// with `w_k = 1`, or the centred mark for marked fields. Cross entries carry
/// no atom.
pub fn self_pair_mass(pattern: &MultiPattern, marked: bool, norm: Normalisation) -> Result<Vec<f64>> {
    let counts = pattern.counts();
    (0..pattern.d())
        .map(|i| {
            let n = counts[i] as f64;
            let s2 = match norm {
                Normalisation::SqrtCounts if counts[i] > 0 => n,
                _ => 1.0,
            };
            if !marked {
                return Ok(n / s2);
            }
            let marks: Vec<f64> = pattern.component_events(i).map(|e| e.mark).collect::<Option<_>>().ok_or_else(|| {
                Error::Contract("marked atom requires a mark on every event".into())
            })?;
            let mean = marks.iter().sum::<f64>() / n.max(1.0);
            Ok(marks.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / s2)
        })
        .collect()
}

/// Zero-lag atom separated from the continuous part of an auto series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomSplit {
    pub atom: f64,
    pub continuous: Vec<f64>,
}

/// Removes `mass` from the zero-lag value of `series`.
pub fn split_atom(lags: &LagGrid, series: &LagSeries, mass: f64) -> AtomSplit {
    let mut continuous = series.values.clone();
    let zero = lags.index(0, 0, 0).expect("zero lag on grid");
    continuous[zero] -= mass;
    AtomSplit { atom: mass, continuous }
}

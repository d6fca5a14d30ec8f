//! Nonuniform DFTs of point locations, periodogram and smoothed spectral
//! matrices, coherence-type statistics and polar summaries.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Freq, Result};
use crate::ingest::MultiPattern;
use crate::linalg::{solve_hermitian, CMatrix};

const TAU: f64 = std::f64::consts::TAU;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Events per block in the separable transform; blocks are reduced in order,
/// so results do not depend on the number of worker threads.
const BLOCK: usize = 4096;

/// `exp(-2πi·φ)` with the integer part of `φ` removed first; quarter turns
/// are returned exactly.
pub(crate) fn cis_neg(phase: f64) -> Complex64 {
    let f = phase - phase.round();
    let quarter = 4.0 * f;
    if quarter == quarter.round() {
        return match quarter as i32 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, -1.0),
            -1 => Complex64::new(0.0, 1.0),
            _ => Complex64::new(-1.0, 0.0),
        };
    }
    let (s, c) = (-TAU * f).sin_cos();
    Complex64::new(c, s)
}

/// Integer lattice of frequencies `(p, q, u)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub p_max: i32,
    pub q_min: i32,
    pub q_max: i32,
    pub u_min: i32,
    pub u_max: i32,
    pub t_steps: u32,
    pub include_dc: bool,
}

impl FrequencyGrid {
    /// `p ∈ 0..=16`, `q ∈ -16..=16`, `u ∈ -⌊(T-1)/2⌋..=⌊T/2⌋`, DC excluded.
    pub fn default_for(t_steps: u32) -> Self {
        let (u_min, u_max) = Self::u_bounds(t_steps);
        FrequencyGrid {
            p_max: 16,
            q_min: -16,
            q_max: 16,
            u_min,
            u_max,
            t_steps,
            include_dc: false,
        }
    }

    pub fn u_bounds(t_steps: u32) -> (i32, i32) {
        let t = t_steps as i32;
        (-((t - 1) / 2), t / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_steps == 0 {
            return Err(Error::Parameter("T must be at least 1".into()));
        }
        if self.p_max < 0 || self.q_min > self.q_max || self.u_min > self.u_max {
            return Err(Error::Parameter(format!("empty frequency grid {self:?}")));
        }
        let (lo, hi) = Self::u_bounds(self.t_steps);
        if self.u_min < lo || self.u_max > hi {
            return Err(Error::Parameter(format!(
                "u range {}..={} exceeds {lo}..={hi} for T = {}",
                self.u_min, self.u_max, self.t_steps
            )));
        }
        Ok(())
    }

    pub fn np(&self) -> usize {
        (self.p_max + 1) as usize
    }

    pub fn nq(&self) -> usize {
        (self.q_max - self.q_min + 1) as usize
    }

    pub fn nu(&self) -> usize {
        (self.u_max - self.u_min + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.np() * self.nq() * self.nu()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index, `p` slowest and `u` fastest.
    pub fn index(&self, p: i32, q: i32, u: i32) -> Option<usize> {
        if p < 0 || p > self.p_max || q < self.q_min || q > self.q_max || u < self.u_min || u > self.u_max {
            return None;
        }
        Some(((p as usize * self.nq()) + (q - self.q_min) as usize) * self.nu() + (u - self.u_min) as usize)
    }

    pub fn freq(&self, idx: usize) -> Freq {
        let nu = self.nu();
        let nq = self.nq();
        let u = (idx % nu) as i32 + self.u_min;
        let q = ((idx / nu) % nq) as i32 + self.q_min;
        let p = (idx / (nu * nq)) as i32;
        (p, q, u)
    }

    pub fn is_dc(&self, idx: usize) -> bool {
        self.freq(idx) == (0, 0, 0)
    }

    /// Grid points admitted to sup/threshold statistics.
    pub fn stat_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.include_dc || !self.is_dc(k)).collect()
    }
}

/// `F_i(p,q,u)` for every component on a grid: `values[i * grid.len() + idx]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DftField {
    pub grid: FrequencyGrid,
    pub d: usize,
    pub counts: Vec<usize>,
    pub marked: bool,
    pub values: Vec<Complex64>,
}

impl DftField {
    pub fn get(&self, i: usize, idx: usize) -> Complex64 {
        self.values[i * self.grid.len() + idx]
    }

    pub fn component(&self, i: usize) -> &[Complex64] {
        let n = self.grid.len();
        &self.values[i * n..(i + 1) * n]
    }
}

fn check_inputs(pattern: &MultiPattern, grid: &FrequencyGrid) -> Result<()> {
    grid.validate()?;
    if grid.t_steps != pattern.t_steps() {
        return Err(Error::Parameter(format!(
            "grid built for T = {} but pattern has T = {}",
            grid.t_steps,
            pattern.t_steps()
        )));
    }
    if let Some(e) = pattern
        .events()
        .iter()
        .find(|e| !(0.0..=1.0).contains(&e.x) || !(0.0..=1.0).contains(&e.y))
    {
        return Err(Error::Domain(format!(
            "event ({}, {}) outside the unit square; rescale first",
            e.x, e.y
        )));
    }
    Ok(())
}

/// Per-event weights: 1, or the centred mark `m - m̄_i`.
fn event_weights(pattern: &MultiPattern, marked: bool) -> Result<Option<Vec<f64>>> {
    if !marked {
        return Ok(None);
    }
    if !pattern.is_marked() {
        return Err(Error::Contract("marked transform requires a mark on every event".into()));
    }
    let d = pattern.d();
    let counts = pattern.counts();
    // Mean as first mark plus mean offset, so constant marks centre to exactly 0.
    let mut first: Vec<Option<f64>> = vec![None; d];
    let mut offset = vec![0.0; d];
    for e in pattern.events() {
        let m = e.mark.unwrap_or(0.0);
        let m0 = *first[e.component].get_or_insert(m);
        offset[e.component] += m - m0;
    }
    let mean: Vec<f64> = (0..d)
        .map(|i| first[i].map_or(0.0, |m0| m0 + offset[i] / counts[i] as f64))
        .collect();
    Ok(Some(
        pattern
            .events()
            .iter()
            .map(|e| e.mark.unwrap_or(0.0) - mean[e.component])
            .collect(),
    ))
}

fn direct(pattern: &MultiPattern, grid: &FrequencyGrid, marked: bool) -> Result<DftField> {
    check_inputs(pattern, grid)?;
    let w = event_weights(pattern, marked)?;
    let d = pattern.d();
    let t = grid.t_steps as f64;
    let ev = pattern.events();
    let n = grid.len();
    let mut values = vec![ZERO; d * n];
    values.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        let members: Vec<usize> = (0..ev.len()).filter(|&k| ev[k].component == i).collect();
        for (idx, o) in out.iter_mut().enumerate() {
            let (p, q, u) = grid.freq(idx);
            let mut acc = ZERO;
            for &k in &members {
                let e = &ev[k];
                let phase = p as f64 * e.x + q as f64 * e.y + u as f64 * e.t_idx as f64 / t;
                let z = cis_neg(phase);
                acc += match &w {
                    Some(w) => z * w[k],
                    None => z,
                };
            }
            *o = acc;
        }
    });
    Ok(DftField {
        grid: grid.clone(),
        d,
        counts: pattern.counts(),
        marked,
        values,
    })
}

/// `F_i(p,q,u) = Σ_t Σ_k exp(-2πi(p x_k + q y_k + u t/T))` by direct summation at
/// every grid point.
pub fn dft(pattern: &MultiPattern, grid: &FrequencyGrid) -> Result<DftField> {
    direct(pattern, grid, false)
}

/// Marked transform: each summand weighted by `m_k - m̄_i`. The direct form is
/// used; see [`marked_dft_separable`] for the factorised one.
pub fn marked_dft(pattern: &MultiPattern, grid: &FrequencyGrid) -> Result<DftField> {
    direct(pattern, grid, true)
}

/// Fills `out[k] = scale·exp(-2πi(start+k)·x)` by repeated multiplication,
/// reseeding with an exact evaluation every `RESEED` steps to bound drift.
fn powers(x: f64, start: i32, scale: f64, out: &mut [Complex64]) {
    const RESEED: usize = 16;
    let step = cis_neg(x);
    let mut cur = ZERO;
    for (k, o) in out.iter_mut().enumerate() {
        cur = if k % RESEED == 0 {
            cis_neg((start + k as i32) as f64 * x)
        } else {
            cur * step
        };
        *o = cur * scale;
    }
}

fn separable(pattern: &MultiPattern, grid: &FrequencyGrid, marked: bool) -> Result<DftField> {
    check_inputs(pattern, grid)?;
    let w = event_weights(pattern, marked)?;
    let d = pattern.d();
    let ts = grid.t_steps as usize;
    let (np, nq, nu) = (grid.np(), grid.nq(), grid.nu());
    let ev = pattern.events();
    let plane = np * nq;
    // Per-time spatial transforms F^(t)_i(p,q): partial[i][t][p][q].
    let partial_len = d * ts * plane;
    // Real and imaginary parts are kept in separate arrays so the inner loop
    // vectorises; the arithmetic matches complex multiply-add exactly.
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = ev
        .par_chunks(BLOCK)
        .enumerate()
        .map(|(b, chunk)| {
            let mut acc_re = vec![0.0; partial_len];
            let mut acc_im = vec![0.0; partial_len];
            let mut ex = vec![ZERO; np];
            let mut ey = vec![ZERO; nq];
            let mut ey_re = vec![0.0; nq];
            let mut ey_im = vec![0.0; nq];
            for (k, e) in chunk.iter().enumerate() {
                let wk = w.as_ref().map_or(1.0, |w| w[b * BLOCK + k]);
                powers(e.x, 0, wk, &mut ex);
                powers(e.y, grid.q_min, 1.0, &mut ey);
                for (qi, z) in ey.iter().enumerate() {
                    ey_re[qi] = z.re;
                    ey_im[qi] = z.im;
                }
                let base = (e.component * ts + e.t_idx as usize - 1) * plane;
                for (p, zx) in ex.iter().enumerate() {
                    let lo = base + p * nq;
                    let re = &mut acc_re[lo..lo + nq];
                    let im = &mut acc_im[lo..lo + nq];
                    for (((r, i), &yr), &yi) in re.iter_mut().zip(im.iter_mut()).zip(&ey_re).zip(&ey_im) {
                        *r += zx.re * yr - zx.im * yi;
                        *i += zx.re * yi + zx.im * yr;
                    }
                }
            }
            (acc_re, acc_im)
        })
        .collect();
    let mut spatial = vec![ZERO; partial_len];
    for (re, im) in &blocks {
        for ((s, &r), &i) in spatial.iter_mut().zip(re).zip(im) {
            *s += Complex64::new(r, i);
        }
    }
    // exp(-2πi u t / T) with u·t reduced modulo T before scaling.
    let t = grid.t_steps as i64;
    let et: Vec<Complex64> = (1..=t)
        .flat_map(|tt| {
            (grid.u_min..=grid.u_max).map(move |u| {
                let r = (u as i64 * tt).rem_euclid(t);
                cis_neg(r as f64 / t as f64)
            })
        })
        .collect();
    let n = grid.len();
    let mut values = vec![ZERO; d * n];
    values.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        for pq in 0..plane {
            for ui in 0..nu {
                let mut acc = ZERO;
                for tt in 0..ts {
                    acc += et[tt * nu + ui] * spatial[(i * ts + tt) * plane + pq];
                }
                out[pq * nu + ui] = acc;
            }
        }
    });
    Ok(DftField {
        grid: grid.clone(),
        d,
        counts: pattern.counts(),
        marked,
        values,
    })
}

/// Same transform evaluated as `Σ_t exp(-2πi u t/T)·F^(t)_i(p,q)`, with the
/// per-time spatial transforms summed over events first.
pub fn dft_separable(pattern: &MultiPattern, grid: &FrequencyGrid) -> Result<DftField> {
    separable(pattern, grid, false)
}

pub fn marked_dft_separable(pattern: &MultiPattern, grid: &FrequencyGrid) -> Result<DftField> {
    separable(pattern, grid, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalisation {
    /// Divide entry `(i, j)` by `√(n_i n_j)`.
    SqrtCounts,
    Unit,
}

impl Normalisation {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalisation::SqrtCounts => "sqrt_counts",
            Normalisation::Unit => "unit",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Raw,
    Smoothed,
}

/// A Hermitian `d×d` matrix per grid point: `values[idx * d * d + i * d + j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    pub grid: FrequencyGrid,
    pub d: usize,
    pub kind: FieldKind,
    pub marked: bool,
    pub normalisation: Normalisation,
    /// Per-component scale `s_i`; entry `(i, j)` is divided by `s_i s_j`.
    pub scale: Vec<f64>,
    pub half_widths: Option<(u32, u32, u32)>,
    pub values: Vec<Complex64>,
}

impl SpectralField {
    pub fn entry(&self, idx: usize, i: usize, j: usize) -> Complex64 {
        self.values[idx * self.d * self.d + i * self.d + j]
    }

    pub fn matrix(&self, idx: usize) -> CMatrix {
        let dd = self.d * self.d;
        CMatrix::from_row_major(self.d, self.d, self.values[idx * dd..(idx + 1) * dd].to_vec())
    }

    /// Real-valued field of one entry.
    pub fn entry_field(&self, i: usize, j: usize) -> Vec<Complex64> {
        (0..self.grid.len()).map(|k| self.entry(k, i, j)).collect()
    }

    /// Largest `|f_ij - conj(f_ji)|` over the field (zero by construction).
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.grid.len())
            .map(|k| self.matrix(k).hermitian_defect())
            .fold(0.0, f64::max)
    }
}

fn component_scale(counts: &[usize], norm: Normalisation) -> Vec<f64> {
    counts
        .iter()
        .map(|&n| match norm {
            Normalisation::SqrtCounts if n > 0 => (n as f64).sqrt(),
            _ => 1.0,
        })
        .collect()
}

/// `f_ij(w) = F_i(w)·conj(F_j(w)) / (s_i s_j)`; exactly Hermitian with a real diagonal.
pub fn periodogram_matrix(dfts: &DftField, norm: Normalisation) -> SpectralField {
    let d = dfts.d;
    let n = dfts.grid.len();
    let scale = component_scale(&dfts.counts, norm);
    let mut values = vec![ZERO; n * d * d];
    values.par_chunks_mut(d * d).enumerate().for_each(|(idx, m)| {
        for i in 0..d {
            let fi = dfts.get(i, idx);
            m[i * d + i] = Complex64::new(fi.norm_sqr() / (scale[i] * scale[i]), 0.0);
            for j in i + 1..d {
                let v = fi * dfts.get(j, idx).conj() / (scale[i] * scale[j]);
                m[i * d + j] = v;
                m[j * d + i] = v.conj();
            }
        }
    });
    SpectralField {
        grid: dfts.grid.clone(),
        d,
        kind: FieldKind::Raw,
        marked: dfts.marked,
        normalisation: norm,
        scale,
        half_widths: None,
        values,
    }
}

/// Default half-widths: `(1,1,0)` for `T ≤ 4`, else `(1,1,1)`.
pub fn default_half_widths(t_steps: u32) -> (u32, u32, u32) {
    if t_steps <= 4 {
        (1, 1, 0)
    } else {
        (1, 1, 1)
    }
}

/// Number of grid points in a full (untruncated) smoothing neighbourhood.
pub fn neighbourhood_size(h: (u32, u32, u32)) -> usize {
    ((2 * h.0 + 1) * (2 * h.1 + 1) * (2 * h.2 + 1)) as usize
}

/// Box sums along one axis of a `[outer][len][inner]` array, each window
/// truncated to the axis.
fn box_axis<T>(data: &[T], outer: usize, len: usize, inner: usize, h: usize) -> Vec<T>
where
    T: Copy + Default + std::ops::AddAssign,
{
    if h == 0 {
        return data.to_vec();
    }
    let mut out = vec![T::default(); data.len()];
    for o in 0..outer {
        for k in 0..len {
            let lo = k.saturating_sub(h);
            let hi = (k + h).min(len - 1);
            for r in 0..inner {
                let mut acc = T::default();
                for kk in lo..=hi {
                    acc += data[(o * len + kk) * inner + r];
                }
                out[(o * len + k) * inner + r] = acc;
            }
        }
    }
    out
}

fn box_sum<T>(data: &[T], g: &FrequencyGrid, h: (u32, u32, u32)) -> Vec<T>
where
    T: Copy + Default + std::ops::AddAssign,
{
    let (np, nq, nu) = (g.np(), g.nq(), g.nu());
    let f = box_axis(data, np * nq, nu, 1, h.2 as usize);
    let f = box_axis(&f, np, nq, nu, h.1 as usize);
    box_axis(&f, 1, np, nq * nu, h.0 as usize)
}

/// Uniform (Daniell) average of every entry over the `(2h_p+1)(2h_q+1)(2h_u+1)`
/// neighbourhood, truncated at the grid edges with renormalised weights.
///
/// Unless the grid includes DC, the DC ordinate (which carries the squared
/// mean rather than covariance) is left out of every neighbourhood as if it
/// were off the grid; its own smoothed value is the mean of its neighbours.
pub fn smooth_spectra(raw: &SpectralField, h: (u32, u32, u32)) -> SpectralField {
    let d = raw.d;
    let g = &raw.grid;
    let dc = if g.include_dc { None } else { g.index(0, 0, 0) };
    let mut mask = vec![1.0f64; g.len()];
    if let Some(k) = dc {
        mask[k] = 0.0;
    }
    let weight = box_sum(&mask, g, h);
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let smoothed: Vec<Vec<Complex64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut f = raw.entry_field(i, j);
            let keep = dc.map(|k| f[k]);
            if let Some(k) = dc {
                f[k] = ZERO;
            }
            let mut out: Vec<Complex64> = box_sum(&f, g, h).iter().zip(&weight).map(|(v, &w)| v / w).collect();
            if let (Some(k), Some(v)) = (dc, keep) {
                if weight[k] == 0.0 {
                    out[k] = v;
                }
            }
            out
        })
        .collect();
    let n = g.len();
    let mut values = vec![ZERO; n * d * d];
    for (&(i, j), f) in pairs.iter().zip(&smoothed) {
        for (idx, &v) in f.iter().enumerate() {
            let m = &mut values[idx * d * d..(idx + 1) * d * d];
            if i == j {
                m[i * d + i] = Complex64::new(v.re, 0.0);
            } else {
                m[i * d + j] = v;
                m[j * d + i] = v.conj();
            }
        }
    }
    SpectralField {
        kind: FieldKind::Smoothed,
        half_widths: Some(h),
        values,
        ..raw.clone()
    }
}

/// `|f_ij|² / (f_ii f_jj)`; exactly 1 for `i = j`, NaN where an auto-spectrum vanishes.
pub fn coherence(field: &SpectralField, i: usize, j: usize) -> Vec<f64> {
    (0..field.grid.len())
        .map(|k| {
            if i == j {
                return 1.0;
            }
            let den = field.entry(k, i, i).re * field.entry(k, j, j).re;
            if den > 0.0 {
                field.entry(k, i, j).norm_sqr() / den
            } else {
                f64::NAN
            }
        })
        .collect()
}

/// `f_iJ f_JJ⁻¹ f_Ji / f_ii`.
pub fn multiple_coherence(field: &SpectralField, i: usize, set: &[usize]) -> Result<Vec<f64>> {
    if set.is_empty() || set.contains(&i) || set.iter().any(|&j| j >= field.d) {
        return Err(Error::Parameter("conditioning set must be non-empty, valid and exclude i".into()));
    }
    (0..field.grid.len())
        .map(|k| {
            let m = field.matrix(k);
            let f_jj = m.select(set, set);
            let f_ji = m.select(set, &[i]);
            let x = solve_hermitian(&f_jj, &f_ji).ok_or(Error::Singular { freq: field.grid.freq(k) })?;
            let num: Complex64 = set.iter().enumerate().map(|(a, &j)| m[(i, j)] * x[(a, 0)]).sum();
            let fii = m[(i, i)].re;
            if fii > 0.0 {
                Ok(num.re / fii)
            } else {
                Err(Error::Singular { freq: field.grid.freq(k) })
            }
        })
        .collect()
}

/// Statistics between component `i` and the superposition `•` of all others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DotSpectrum {
    pub i: usize,
    /// Smoothed `[f_ii, f_i•; f_•i, f_••]` per grid point.
    pub field: SpectralField,
}

impl DotSpectrum {
    pub fn cross(&self) -> Vec<Complex64> {
        self.field.entry_field(0, 1)
    }

    pub fn coherence(&self) -> Vec<f64> {
        coherence(&self.field, 0, 1)
    }

    /// `G_{i|•} = √(f_ii |R_i•|²) / f_••`.
    pub fn gain(&self) -> Vec<f64> {
        gain_spectrum(&self.field, 0, 1)
    }
}

/// Transform of `F_• = Σ_{j≠i} F_j`, then the smoothed 2×2 spectral matrix of `(F_i, F_•)`.
pub fn dot_spectrum(dfts: &DftField, i: usize, h: (u32, u32, u32), norm: Normalisation) -> Result<DotSpectrum> {
    if i >= dfts.d || dfts.d < 2 {
        return Err(Error::Parameter(format!("component {} out of range", i + 1)));
    }
    let n = dfts.grid.len();
    let mut values = Vec::with_capacity(2 * n);
    values.extend_from_slice(dfts.component(i));
    let dot: Vec<Complex64> = (0..n)
        .map(|k| (0..dfts.d).filter(|&j| j != i).map(|j| dfts.get(j, k)).sum())
        .collect();
    values.extend(dot);
    let n_dot = dfts.counts.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &c)| c).sum();
    let pair = DftField {
        grid: dfts.grid.clone(),
        d: 2,
        counts: vec![dfts.counts[i], n_dot],
        marked: dfts.marked,
        values,
    };
    Ok(DotSpectrum {
        i,
        field: smooth_spectra(&periodogram_matrix(&pair, norm), h),
    })
}

/// `G_{i|j} = √(f_ii·|R_ij|²) / f_jj` with `|R_ij|²` the squared coherence.
pub fn gain_spectrum(field: &SpectralField, i: usize, j: usize) -> Vec<f64> {
    coherence(field, i, j)
        .into_iter()
        .enumerate()
        .map(|(k, r2)| (field.entry(k, i, i).re * r2).sqrt() / field.entry(k, j, j).re)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossDecomposition {
    pub co: Vec<f64>,
    pub quadrature: Vec<f64>,
    pub amplitude: Vec<f64>,
    /// `atan2(-Q, C)`, in `(-π, π]`.
    pub phase: Vec<f64>,
}

/// Co-spectrum `C = Re f_ij`, quadrature `Q = -Im f_ij`, amplitude and phase.
pub fn decompose_cross_spectrum(field: &SpectralField, i: usize, j: usize) -> CrossDecomposition {
    let f = field.entry_field(i, j);
    CrossDecomposition {
        co: f.iter().map(|z| z.re).collect(),
        quadrature: f.iter().map(|z| -z.im).collect(),
        amplitude: f.iter().map(|z| z.norm()).collect(),
        phase: f.iter().map(|z| (z.im).atan2(z.re)).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarKind {
    R,
    Theta,
}

/// Bin averages of a real field in polar spatial-frequency coordinates, one row
/// per temporal frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarSpectrum {
    pub kind: PolarKind,
    /// Radii `1, 2, …` or angles `0, 10, …, 170` degrees.
    pub abscissa: Vec<f64>,
    pub u_values: Vec<i32>,
    /// `values[u][bin]`; NaN for empty bins.
    pub values: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
}

/// Radius bin `r` holds ordinates with `r - 1 < √(p² + q²) ≤ r`.
pub fn radius_bin(p: i32, q: i32) -> Option<usize> {
    let r = ((p * p + q * q) as f64).sqrt();
    if r == 0.0 {
        None
    } else {
        Some(r.ceil() as usize)
    }
}

/// Angle band of `θ' = atan2(p, q)` in degrees: band `θ ∈ {0, 10, …, 170}` holds
/// `θ - 5 < θ' ≤ θ + 5`, with `(175, 180]` folded into the 0° band.
pub fn angle_bin(p: i32, q: i32) -> Option<usize> {
    if p == 0 && q == 0 {
        return None;
    }
    // Lattice angles that sit exactly on a band edge (45°, 135°) must not
    // depend on the last bit of atan2.
    let theta = ((p as f64).atan2(q as f64).to_degrees() * 1e9).round() / 1e9;
    let b = ((theta - 5.0) / 10.0).ceil() as i64;
    Some(b.rem_euclid(18) as usize)
}

fn polar(grid: &FrequencyGrid, field: &[f64], kind: PolarKind) -> PolarSpectrum {
    let (nbins, abscissa): (usize, Vec<f64>) = match kind {
        PolarKind::R => {
            let rmax = (0..=grid.p_max)
                .flat_map(|p| (grid.q_min..=grid.q_max).filter_map(move |q| radius_bin(p, q)))
                .max()
                .unwrap_or(0);
            (rmax, (1..=rmax).map(|r| r as f64).collect())
        }
        PolarKind::Theta => (18, (0..18).map(|b| 10.0 * b as f64).collect()),
    };
    let u_values: Vec<i32> = (grid.u_min..=grid.u_max).collect();
    let mut sums = vec![vec![0.0; nbins]; u_values.len()];
    let mut counts = vec![vec![0usize; nbins]; u_values.len()];
    for (idx, &v) in field.iter().enumerate() {
        let (p, q, u) = grid.freq(idx);
        let bin = match kind {
            PolarKind::R => radius_bin(p, q).map(|r| r - 1),
            PolarKind::Theta => angle_bin(p, q),
        };
        if let Some(b) = bin {
            let ui = (u - grid.u_min) as usize;
            sums[ui][b] += v;
            counts[ui][b] += 1;
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| s.iter().zip(c).map(|(&s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect())
        .collect();
    PolarSpectrum {
        kind,
        abscissa,
        u_values,
        values,
        counts,
    }
}

pub fn r_spectrum(grid: &FrequencyGrid, field: &[f64]) -> PolarSpectrum {
    polar(grid, field, PolarKind::R)
}

pub fn theta_spectrum(grid: &FrequencyGrid, field: &[f64]) -> PolarSpectrum {
    polar(grid, field, PolarKind::Theta)
}

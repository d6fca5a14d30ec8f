//! Settings that carry a pattern through DFT, periodogram, smoothing and
//! inversion, shared by the graph builders, null calibration and the CLI.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::MultiPattern;
use crate::partial::{partial_field, PartialField, RidgePolicy};
use crate::spectra::{
    default_half_widths, dft, dft_separable, marked_dft, marked_dft_separable, periodogram_matrix, smooth_spectra,
    DftField, FrequencyGrid, Normalisation, SpectralField,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DftMethod {
    Direct,
    Separable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSettings {
    pub p_max: i32,
    pub q_min: i32,
    pub q_max: i32,
    /// `None`: the full range for the pattern's `T`.
    pub u_range: Option<(i32, i32)>,
    pub include_dc: bool,
    /// `None`: [`default_half_widths`] for the pattern's `T`.
    pub half_widths: Option<(u32, u32, u32)>,
    pub marked: bool,
    pub normalisation: Normalisation,
    pub method: DftMethod,
    pub ridge: RidgePolicy,
}

impl Default for SpectralSettings {
    fn default() -> Self {
        let g = FrequencyGrid::default_for(1);
        SpectralSettings {
            p_max: g.p_max,
            q_min: g.q_min,
            q_max: g.q_max,
            u_range: None,
            include_dc: false,
            half_widths: None,
            marked: false,
            normalisation: Normalisation::SqrtCounts,
            method: DftMethod::Separable,
            ridge: RidgePolicy::default(),
        }
    }
}

impl SpectralSettings {
    pub fn grid_for(&self, t_steps: u32) -> Result<FrequencyGrid> {
        let (u_min, u_max) = match self.u_range {
            Some(r) if t_steps > 1 => r,
            _ => FrequencyGrid::u_bounds(t_steps),
        };
        let g = FrequencyGrid {
            p_max: self.p_max,
            q_min: self.q_min,
            q_max: self.q_max,
            u_min,
            u_max,
            t_steps,
            include_dc: self.include_dc,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn half_widths_for(&self, t_steps: u32) -> (u32, u32, u32) {
        match self.half_widths {
            Some((hp, hq, _)) if t_steps == 1 => (hp, hq, 0),
            Some(h) => h,
            None => default_half_widths(t_steps),
        }
    }

    /// DFTs of `pattern` on its grid, marked or ground-process.
    pub fn dft_field(&self, pattern: &MultiPattern, marked: bool) -> Result<DftField> {
        if marked && !pattern.is_marked() {
            return Err(Error::Parameter("marked analysis requested but the pattern has no marks".into()));
        }
        let grid = self.grid_for(pattern.t_steps())?;
        match (marked, self.method) {
            (false, DftMethod::Separable) => dft_separable(pattern, &grid),
            (false, DftMethod::Direct) => dft(pattern, &grid),
            (true, DftMethod::Separable) => marked_dft_separable(pattern, &grid),
            (true, DftMethod::Direct) => marked_dft(pattern, &grid),
        }
    }

    /// Raw periodogram matrix.
    pub fn raw_field(&self, pattern: &MultiPattern, marked: bool) -> Result<SpectralField> {
        Ok(periodogram_matrix(&self.dft_field(pattern, marked)?, self.normalisation))
    }

    /// Smoothed spectral matrix of `pattern`.
    pub fn smoothed_field(&self, pattern: &MultiPattern) -> Result<SpectralField> {
        let raw = self.raw_field(pattern, self.marked)?;
        Ok(smooth_spectra(&raw, self.half_widths_for(pattern.t_steps())))
    }

    /// Partial statistics of `pattern` for every pair.
    pub fn partial(&self, pattern: &MultiPattern) -> Result<PartialField> {
        partial_field(&self.smoothed_field(pattern)?, &self.ridge)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_grid_collapses_time_axis() {
        let s = SpectralSettings {
            u_range: Some((-1, 2)),
            half_widths: Some((1, 1, 1)),
            ..Default::default()
        };
        let g = s.grid_for(1).unwrap();
        assert_eq!((g.u_min, g.u_max), (0, 0));
        assert_eq!(s.half_widths_for(1), (1, 1, 0));
        assert_eq!(s.grid_for(4).unwrap().nu(), 4);
    }

    #[test]
    fn marked_request_on_unmarked_pattern_fails() {
        let p = crate::simulate::simulate(&crate::simulate::SimSpec::poisson(vec![50.0; 3], 2, 0))
            .unwrap()
            .pattern;
        let s = SpectralSettings {
            marked: true,
            ..Default::default()
        };
        assert!(matches!(s.smoothed_field(&p), Err(Error::Parameter(_))));
    }
}

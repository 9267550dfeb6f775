use serde::{Deserialize, Serialize};

use crate::cc::AreaRule;
use crate::error::{Error, Result};
use crate::lig::{check_fraction, default_center_size, LigParams};
use crate::sort::SortParams;

/// Every tunable of the detection pipeline. Fields left as `None` are derived
/// from `upsample_factor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// LIG window side; 7 at the original scale, 19 at 2x and 39 at 4x.
    pub patch_size: Option<usize>,
    pub center_size: Option<usize>,
    pub sector_count: usize,
    pub top_fraction: f64,
    /// Structuring element side; 5 at the original scale, 10 otherwise.
    pub dilation_side: Option<usize>,
    pub area_min_exclusive: usize,
    pub area_max_exclusive: usize,
    /// Multiply the area bounds by `upsample_factor^2`.
    pub scale_area_with_factor: bool,
    pub upsample_factor: usize,
    pub top_n_targets: usize,
    /// True-positive radius at the original scale, in pixels.
    pub tp_distance: f64,
    pub sort: SortParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            patch_size: None,
            center_size: None,
            sector_count: 8,
            top_fraction: 1e-4,
            dilation_side: None,
            area_min_exclusive: 1,
            area_max_exclusive: 100,
            scale_area_with_factor: false,
            upsample_factor: 1,
            top_n_targets: 1,
            tp_distance: 10.0,
            sort: SortParams::default(),
        }
    }
}

/// Values actually used for a run after defaults are filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub lig: ResolvedLig,
    pub dilation_side: usize,
    pub area_rule: AreaRule,
    pub tp_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedLig {
    pub patch_size: usize,
    pub center_size: usize,
    pub sector_count: usize,
    pub top_fraction: f64,
}

impl PipelineConfig {
    pub fn with_factor(upsample_factor: usize) -> Self {
        PipelineConfig {
            upsample_factor,
            ..PipelineConfig::default()
        }
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size.unwrap_or(match self.upsample_factor {
            1 => 7,
            2 => 19,
            _ => 39,
        })
    }

    pub fn lig_params(&self) -> LigParams {
        let k = self.patch_size();
        LigParams {
            patch_size: k,
            center_size: self.center_size.unwrap_or_else(|| default_center_size(k)),
            sector_count: self.sector_count,
            top_fraction: self.top_fraction,
        }
    }

    pub fn dilation_side(&self) -> usize {
        self.dilation_side
            .unwrap_or(if self.upsample_factor == 1 { 5 } else { 10 })
    }

    pub fn area_rule(&self) -> AreaRule {
        let scale = if self.scale_area_with_factor {
            self.upsample_factor * self.upsample_factor
        } else {
            1
        };
        AreaRule {
            min_exclusive: self.area_min_exclusive * scale,
            max_exclusive: self.area_max_exclusive * scale,
        }
    }

    /// True-positive radius in processed (possibly upsampled) pixels.
    pub fn scaled_tp_distance(&self) -> f64 {
        self.tp_distance * self.upsample_factor as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.upsample_factor, 1 | 2 | 4) {
            return Err(Error::param(
                "upsample_factor",
                format!("{} (must be 1, 2 or 4)", self.upsample_factor),
            ));
        }
        self.lig_params().validate()?;
        check_fraction(self.top_fraction)?;
        if self.dilation_side() == 0 {
            return Err(Error::param("dilation_side", "must be >= 1"));
        }
        self.area_rule().validate()?;
        if self.top_n_targets == 0 {
            return Err(Error::param("top_n_targets", "must be >= 1"));
        }
        if !(self.tp_distance > 0.0 && self.tp_distance.is_finite()) {
            return Err(Error::param("tp_distance", "must be positive"));
        }
        self.sort.validate()
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        self.validate()?;
        let lig = self.lig_params();
        Ok(ResolvedConfig {
            lig: ResolvedLig {
                patch_size: lig.patch_size,
                center_size: lig.center_size,
                sector_count: lig.sector_count,
                top_fraction: lig.top_fraction,
            },
            dilation_side: self.dilation_side(),
            area_rule: self.area_rule(),
            tp_distance: self.scaled_tp_distance(),
        })
    }
}

//! Organ-of-interest (OOI) masks from two multi-organ label maps, and the
//! bowel-wall band derived from an undilated OOI.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{binary_combine, BoolOp, LabelGrid, Mask};
use crate::morphology::{boundary_band, dilate, StructElem};

const DEFAULT_ORGANS: &str = include_str!("../configs/organs.json");

/// Indicator sets and morphology settings for OOI construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrganConfig {
    pub set_ts: BTreeSet<u32>,
    pub set_word: BTreeSet<u32>,
    #[serde(default = "default_dilate_times")]
    pub dilate_times: usize,
    #[serde(default)]
    pub elem: StructElem,
    #[serde(default = "default_wall_radius")]
    pub wall_r_out: usize,
    #[serde(default = "default_wall_radius")]
    pub wall_r_in: usize,
}

fn default_dilate_times() -> usize {
    3
}

fn default_wall_radius() -> usize {
    1
}

impl Default for OrganConfig {
    /// Gastrointestinal organ codes shipped in `configs/organs.json`.
    fn default() -> Self {
        serde_json::from_str(DEFAULT_ORGANS).expect("bundled organ config parses")
    }
}

impl OrganConfig {
    pub fn new(set_ts: impl IntoIterator<Item = u32>, set_word: impl IntoIterator<Item = u32>) -> Self {
        OrganConfig {
            set_ts: set_ts.into_iter().collect(),
            set_word: set_word.into_iter().collect(),
            ..OrganConfig::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: OrganConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.set_ts.is_empty() || self.set_word.is_empty() {
            return Err(Error::invalid("organ indicator sets must be non-empty"));
        }
        Ok(())
    }
}

/// True exactly where the label is in `indicator`.
pub fn select_labels(labels: &LabelGrid, indicator: &BTreeSet<u32>) -> Mask {
    let data = labels.data().iter().map(|v| indicator.contains(v)).collect();
    Mask::from_parts(labels.dims(), labels.spacing(), data)
}

/// Union of the two dilated selections.
pub fn build_ooi(ts_labels: &LabelGrid, word_labels: &LabelGrid, cfg: &OrganConfig) -> Result<Mask> {
    ts_labels.check_geometry(word_labels, "build_ooi")?;
    cfg.validate()?;
    let ts = dilate(&select_labels(ts_labels, &cfg.set_ts), cfg.elem, cfg.dilate_times);
    let word = dilate(&select_labels(word_labels, &cfg.set_word), cfg.elem, cfg.dilate_times);
    binary_combine(&word, &ts, BoolOp::Or)
}

/// Bowel-wall mask: the band between the dilated and eroded OOI.
///
/// `ooi_raw` must be the undilated OOI (built with `dilate_times = 0`);
/// a pre-dilated mask pushes the band off the organ border.
pub fn bowel_wall(ooi_raw: &Mask, elem: StructElem, r_out: usize, r_in: usize) -> Mask {
    boundary_band(ooi_raw, elem, r_out, r_in)
}

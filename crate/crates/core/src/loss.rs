//! Segmentation losses on soft single-class predictions.
//!
//! `L0 = dice_weight * soft_dice + ce_weight * cross_entropy`. The
//! anatomy-focalized loss evaluates `L0` on the prediction multiplied by the
//! OOI mask, so predictions outside the OOI have no influence while ground
//! truth outside it still counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Mask, ScalarGrid, Voxel};
use crate::numeric;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "default_dice_eps")]
    pub dice_eps: f64,
    #[serde(default = "default_ce_eps")]
    pub ce_eps: f64,
    #[serde(default = "one")]
    pub dice_weight: f64,
    #[serde(default = "one")]
    pub ce_weight: f64,
}

fn default_dice_eps() -> f64 {
    1e-5
}

fn default_ce_eps() -> f64 {
    1e-7
}

fn one() -> f64 {
    1.0
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            dice_eps: default_dice_eps(),
            ce_eps: default_ce_eps(),
            dice_weight: 1.0,
            ce_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("dice_eps", self.dice_eps), ("ce_eps", self.ce_eps)] {
            if !(v > 0.0 && v <= 1e-2) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1e-2], got {v}")));
            }
        }
        for (name, v) in [("dice_weight", self.dice_weight), ("ce_weight", self.ce_weight)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// The three loss values reported for one case.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub dice_loss: f64,
    pub ce_loss: f64,
    pub af_loss: f64,
}

fn check(gt: &Mask, pred: &ScalarGrid, cfg: &LossConfig) -> Result<()> {
    gt.check_geometry(pred, "loss")?;
    cfg.validate()?;
    if let Some(v) = pred.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("prediction value {v} outside [0, 1]")));
    }
    Ok(())
}

struct DiceTerms {
    num: f64,
    den: f64,
}

fn dice_terms(gt: &Mask, pred: &ScalarGrid, eps: f64) -> DiceTerms {
    let inter = numeric::sum(pred.data().iter().zip(gt.data()).filter(|(_, &y)| y).map(|(&p, _)| p));
    let sum_p = numeric::sum(pred.data().iter().copied());
    let sum_y = gt.count() as f64;
    DiceTerms {
        num: 2.0 * inter + eps,
        den: sum_p + sum_y + eps,
    }
}

/// `1 - (2 sum(P Y) + eps) / (sum P + sum Y + eps)`.
pub fn soft_dice_loss(gt: &Mask, pred: &ScalarGrid, cfg: &LossConfig) -> Result<f64> {
    check(gt, pred, cfg)?;
    let t = dice_terms(gt, pred, cfg.dice_eps);
    Ok(1.0 - t.num / t.den)
}

#[inline]
fn clamp(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// Mean binary cross-entropy with predictions clamped to `[ce_eps, 1 - ce_eps]`.
pub fn cross_entropy_loss(gt: &Mask, pred: &ScalarGrid, cfg: &LossConfig) -> Result<f64> {
    check(gt, pred, cfg)?;
    let terms = pred.data().iter().zip(gt.data()).map(|(&p, &y)| {
        let p = clamp(p, cfg.ce_eps);
        if y {
            -p.ln()
        } else {
            -(1.0 - p).ln()
        }
    });
    Ok(numeric::sum(terms) / pred.len() as f64)
}

/// Weighted sum of soft Dice and cross-entropy.
pub fn l0_loss(gt: &Mask, pred: &ScalarGrid, cfg: &LossConfig) -> Result<f64> {
    Ok(cfg.dice_weight * soft_dice_loss(gt, pred, cfg)? + cfg.ce_weight * cross_entropy_loss(gt, pred, cfg)?)
}

/// Prediction with everything outside `ooi` set to zero.
pub fn focalize(pred: &ScalarGrid, ooi: &Mask) -> Result<ScalarGrid> {
    pred.check_geometry(ooi, "focalize")?;
    let data = pred
        .data()
        .iter()
        .zip(ooi.data())
        .map(|(&p, &o)| p * o.to_f64())
        .collect();
    ScalarGrid::new(pred.dims(), pred.spacing(), data)
}

/// Anatomy-focalized loss `L0(Y, P * O)`.
pub fn af_loss(gt: &Mask, pred: &ScalarGrid, ooi: &Mask, cfg: &LossConfig) -> Result<f64> {
    gt.check_geometry(ooi, "af_loss")?;
    l0_loss(gt, &focalize(pred, ooi)?, cfg)
}

pub fn loss_report(gt: &Mask, pred: &ScalarGrid, ooi: &Mask, cfg: &LossConfig) -> Result<LossReport> {
    Ok(LossReport {
        dice_loss: soft_dice_loss(gt, pred, cfg)?,
        ce_loss: cross_entropy_loss(gt, pred, cfg)?,
        af_loss: af_loss(gt, pred, ooi, cfg)?,
    })
}

/// d(soft Dice)/dP per voxel.
pub fn soft_dice_grad(gt: &Mask, pred: &ScalarGrid, cfg: &LossConfig) -> Result<ScalarGrid> {
    check(gt, pred, cfg)?;
    let t = dice_terms(gt, pred, cfg.dice_eps);
    let den2 = t.den * t.den;
    let data = gt
        .data()
        .iter()
        .map(|&y| -(2.0 * y.to_f64() * t.den - t.num) / den2)
        .collect();
    ScalarGrid::new(pred.dims(), pred.spacing(), data)
}

/// d(cross-entropy)/dP per voxel; zero where the clamp is active.
pub fn cross_entropy_grad(gt: &Mask, pred: &ScalarGrid, cfg: &LossConfig) -> Result<ScalarGrid> {
    check(gt, pred, cfg)?;
    let n = pred.len() as f64;
    let eps = cfg.ce_eps;
    let data = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &y)| {
            if p < eps || p > 1.0 - eps {
                0.0
            } else if y {
                -1.0 / (p * n)
            } else {
                1.0 / ((1.0 - p) * n)
            }
        })
        .collect();
    ScalarGrid::new(pred.dims(), pred.spacing(), data)
}

/// d(af_loss)/dP: the L0 gradient at `P * O`, zeroed outside the OOI.
pub fn af_loss_grad(gt: &Mask, pred: &ScalarGrid, ooi: &Mask, cfg: &LossConfig) -> Result<ScalarGrid> {
    let masked = focalize(pred, ooi)?;
    let dice = soft_dice_grad(gt, &masked, cfg)?;
    let ce = cross_entropy_grad(gt, &masked, cfg)?;
    let data = dice
        .data()
        .iter()
        .zip(ce.data())
        .zip(ooi.data())
        .map(|((&d, &c), &o)| o.to_f64() * (cfg.dice_weight * d + cfg.ce_weight * c))
        .collect();
    ScalarGrid::new(pred.dims(), pred.spacing(), data)
}

//! Plain and OOI-focalized losses for a prediction with false positives
//! far from the organ.
//!
//! cargo run --example af_loss

use anatomy_guide::loss::{af_loss, af_loss_grad, loss_report, LossConfig};
use anatomy_guide::{Dims, Mask, ScalarGrid, Spacing};

fn main() -> anatomy_guide::Result<()> {
    let d = Dims::new(16, 32, 32)?;
    let s = Spacing::isotropic();
    let ooi = Mask::from_fn(d, s, |c| c.x < 16)?;
    let gt = Mask::from_fn(d, s, |c| {
        (4..8).contains(&c.z) && (10..14).contains(&c.y) && (6..10).contains(&c.x)
    })?;
    // correct on the tumour, plus a confident blob on the far side of the volume
    let pred = ScalarGrid::from_fn(d, s, |c| {
        if gt.get(c).unwrap() {
            0.9
        } else if c.x > 24 && c.y > 24 {
            0.8
        } else {
            0.02
        }
    })?;

    let cfg = LossConfig::default();
    let r = loss_report(&gt, &pred, &ooi, &cfg)?;
    println!("{}", serde_json::to_string_pretty(&r)?);
    let clean = pred.map(|v| if v == 0.8 { 0.02 } else { v })?;
    println!("af_loss without the blob: {:.6}", af_loss(&gt, &clean, &ooi, &cfg)?);

    let g = af_loss_grad(&gt, &pred, &ooi, &cfg)?;
    let outside = g
        .data()
        .iter()
        .zip(ooi.data())
        .filter(|(_, &o)| !o)
        .all(|(v, _)| *v == 0.0);
    println!("gradient is zero outside the OOI: {outside}");
    Ok(())
}

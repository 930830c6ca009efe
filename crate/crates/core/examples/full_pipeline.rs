//! All stages in memory: phantom, OOI, wall, sampling map, patch draws,
//! masking, losses and metrics.
//!
//! cargo run --release --example full_pipeline

use anatomy_guide::loss::{loss_report, LossConfig};
use anatomy_guide::maskgen::{bowel_wall, build_ooi, OrganConfig};
use anatomy_guide::metrics::seg_metrics;
use anatomy_guide::morphology::{dilate, StructElem};
use anatomy_guide::phantom::{erase_arc_segment, gen_phantom, PhantomSpec, LABEL_COLON};
use anatomy_guide::sampling::{combine_psm, draw_centers, gain_map, psm_from_gain, PatchSpec};
use anatomy_guide::ssl::{mask_bowel_wall, NoiseSpec};

fn main() -> anatomy_guide::Result<()> {
    let spec = PhantomSpec::default();
    let p = gen_phantom(&spec)?;
    let ts = erase_arc_segment(&spec, &p.labels, LABEL_COLON, 100.0, 170.0);
    let organs = OrganConfig::new([LABEL_COLON], [LABEL_COLON]);

    let ooi = build_ooi(&ts, &p.labels, &organs)?;
    let raw = build_ooi(
        &ts,
        &p.labels,
        &OrganConfig {
            dilate_times: 0,
            ..organs.clone()
        },
    )?;
    let wall = bowel_wall(&raw, organs.elem, organs.wall_r_out, organs.wall_r_in);

    let patch = PatchSpec::new([16, 48, 48])?;
    let map = combine_psm(
        &psm_from_gain(&gain_map(&ooi, &patch)?, 1.0)?,
        &psm_from_gain(&gain_map(&p.tumor, &patch)?, 1.0)?,
        0.33,
    )?;
    let centers = draw_centers(&map, 4, 11)?;
    let masked = mask_bowel_wall(
        &p.ct,
        &wall,
        &NoiseSpec {
            seed: 5,
            ..NoiseSpec::default()
        },
    )?;

    // stand-in prediction: tumour grown by one voxel
    let pred = dilate(&p.tumor, StructElem::Face6, 1);
    let losses = loss_report(&p.tumor, &pred.to_scalar(), &ooi, &LossConfig::default())?;
    let metrics = seg_metrics(&p.tumor, &pred, 4.0, 1000.0)?;

    println!(
        "ooi {} / wall {} / tumour {} voxels",
        ooi.count(),
        wall.count(),
        p.tumor.count()
    );
    println!("centres {:?}", centers);
    println!(
        "masked voxels differ: {}",
        masked.data().iter().zip(p.ct.data()).filter(|(a, b)| a != b).count()
    );
    println!("losses  {}", serde_json::to_string(&losses)?);
    println!("metrics {}", serde_json::to_string(&metrics)?);
    Ok(())
}

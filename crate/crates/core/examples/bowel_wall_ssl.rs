//! Bowel-wall band, noise masking and the reconstruction target.
//!
//! cargo run --example bowel_wall_ssl

use anatomy_guide::maskgen::{bowel_wall, build_ooi, OrganConfig};
use anatomy_guide::morphology::StructElem;
use anatomy_guide::phantom::{gen_phantom, PhantomSpec, LABEL_COLON};
use anatomy_guide::ssl::{l1_recon_loss, l1_recon_loss_masked, mask_bowel_wall, NoiseSpec};

fn main() -> anatomy_guide::Result<()> {
    let p = gen_phantom(&PhantomSpec::default())?;
    let cfg = OrganConfig {
        dilate_times: 0,
        ..OrganConfig::new([LABEL_COLON], [LABEL_COLON])
    };
    let colon = build_ooi(&p.labels, &p.labels, &cfg)?;
    let wall = bowel_wall(&colon, StructElem::Face6, 1, 1);
    println!("colon {} voxels, wall band {} voxels", colon.count(), wall.count());

    let masked = mask_bowel_wall(
        &p.ct,
        &wall,
        &NoiseSpec {
            seed: 3,
            ..NoiseSpec::default()
        },
    )?;
    println!("L1(x, masked) whole volume {:.4}", l1_recon_loss(&p.ct, &masked)?);
    println!(
        "L1(x, masked) on the band  {:.4}",
        l1_recon_loss_masked(&p.ct, &masked, &wall)?
    );
    Ok(())
}

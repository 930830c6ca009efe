//! Seeded patch-centre draws and patch extraction.
//!
//! cargo run --example draw_patches -- [seed]

use anatomy_guide::extract_patch;
use anatomy_guide::phantom::{gen_phantom, PhantomSpec};
use anatomy_guide::sampling::{draw_centers, gain_map, psm_from_gain, PatchSpec};

fn main() -> anatomy_guide::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let p = gen_phantom(&PhantomSpec::default())?;
    let patch = PatchSpec::new([16, 32, 32])?;
    let map = psm_from_gain(&gain_map(&p.tumor, &patch)?, 1.0)?;

    for c in draw_centers(&map, 6, seed)? {
        let img = extract_patch(&p.ct, c, patch.size, 0.0)?;
        let tum = extract_patch(&p.tumor, c, patch.size, false)?;
        println!(
            "centre {:?}  tumour voxels in patch {:>4}  mean intensity {:+.3}",
            c,
            tum.count(),
            img.sum() / img.len() as f64
        );
    }
    Ok(())
}

//! Organ-of-interest mask from two label maps that disagree.
//!
//! cargo run --example ooi_from_labels

use anatomy_guide::maskgen::{build_ooi, OrganConfig};
use anatomy_guide::phantom::{erase_arc_segment, gen_phantom, PhantomSpec, LABEL_COLON};

fn main() -> anatomy_guide::Result<()> {
    let spec = PhantomSpec::default();
    let p = gen_phantom(&spec)?;
    // the first model misses a stretch of colon around the tumour
    let first = erase_arc_segment(&spec, &p.labels, LABEL_COLON, 100.0, 170.0);
    let second = &p.labels;

    for t in [0, 1, 3] {
        let cfg = OrganConfig {
            dilate_times: t,
            ..OrganConfig::new([LABEL_COLON], [LABEL_COLON])
        };
        let single = build_ooi(&first, &first, &cfg)?;
        let union = build_ooi(&first, second, &cfg)?;
        let hit = |m: &anatomy_guide::Mask| {
            p.tumor.data().iter().zip(m.data()).filter(|(&a, &b)| a && b).count() as f64 / p.tumor.count() as f64
        };
        println!(
            "t={t}: ooi {:>7} voxels, tumour coverage {:.1}% (first model alone {:.1}%)",
            union.count(),
            100.0 * hit(&union),
            100.0 * hit(&single)
        );
    }
    Ok(())
}

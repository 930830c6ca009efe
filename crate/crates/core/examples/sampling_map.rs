//! Gain fields and the combined patch sampling map.
//!
//! cargo run --example sampling_map

use anatomy_guide::maskgen::{build_ooi, OrganConfig};
use anatomy_guide::phantom::{gen_phantom, PhantomSpec, LABEL_COLON};
use anatomy_guide::sampling::{combine_psm, gain_map, psm_from_gain, PatchSpec, DEFAULT_LAMBDA, DEFAULT_MU};

fn main() -> anatomy_guide::Result<()> {
    let p = gen_phantom(&PhantomSpec::default())?;
    let ooi = build_ooi(&p.labels, &p.labels, &OrganConfig::new([LABEL_COLON], [LABEL_COLON]))?;
    let patch = PatchSpec::new([16, 48, 48])?;

    let s_organ = psm_from_gain(&gain_map(&ooi, &patch)?, DEFAULT_MU)?;
    let s_tumor = psm_from_gain(&gain_map(&p.tumor, &patch)?, DEFAULT_MU)?;
    let s = combine_psm(&s_organ, &s_tumor, DEFAULT_LAMBDA)?;

    let n = s.probabilities().len() as f64;
    let mass = |m: &anatomy_guide::Mask| -> f64 {
        s.probabilities()
            .iter()
            .zip(m.data())
            .filter(|(_, &i)| i)
            .map(|(v, _)| v)
            .sum()
    };
    println!("voxels {n}, uniform weight {:.3e}", 1.0 / n);
    println!(
        "max weight {:.3e}",
        s.probabilities().iter().cloned().fold(0.0, f64::max)
    );
    println!(
        "probability mass on OOI   {:.3} ({:.1}% of voxels)",
        mass(&ooi),
        100.0 * ooi.count() as f64 / n
    );
    println!(
        "probability mass on tumour {:.3} ({:.2}% of voxels)",
        mass(&p.tumor),
        100.0 * p.tumor.count() as f64 / n
    );
    Ok(())
}
